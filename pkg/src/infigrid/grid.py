"""Integer lattice regions, sliding-window layouts, and blending weight maps.

Everything here is pure geometry on the Z^2 lattice.  A ``Region`` is a
half-open rectangle ``[x0, x0+width) x [y0, y0+height)``; window layouts
assign a fixed-size square region to every integer index pair.  The
canonical ordering of window indices used throughout the package is
lexicographic on ``(j, i)`` (row-major), which pins down the accumulation
order of floating point sums everywhere downstream.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

#: A window index pair (i, j); i moves along x, j along y.
WindowIndex = tuple[int, int]


@dataclass(frozen=True)
class Region:
    """Half-open rectangle ``[x0, x0+width) x [y0, y0+height)`` on Z^2."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"region must be non-empty, got {self.width}x{self.height}")

    @property
    def x1(self) -> int:
        return self.x0 + self.width

    @property
    def y1(self) -> int:
        return self.y0 + self.height

    @property
    def area(self) -> int:
        return self.width * self.height

    def contains(self, other: "Region") -> bool:
        return (self.x0 <= other.x0 and other.x1 <= self.x1
                and self.y0 <= other.y0 and other.y1 <= self.y1)

    def contains_point(self, x: int, y: int) -> bool:
        return self.x0 <= x < self.x1 and self.y0 <= y < self.y1

    def intersection(self, other: "Region") -> "Region | None":
        x0 = max(self.x0, other.x0)
        y0 = max(self.y0, other.y0)
        x1 = min(self.x1, other.x1)
        y1 = min(self.y1, other.y1)
        if x0 >= x1 or y0 >= y1:
            return None
        return Region(x0, y0, x1 - x0, y1 - y0)

    def bounding_union(self, other: "Region") -> "Region":
        x0 = min(self.x0, other.x0)
        y0 = min(self.y0, other.y0)
        x1 = max(self.x1, other.x1)
        y1 = max(self.y1, other.y1)
        return Region(x0, y0, x1 - x0, y1 - y0)

    def translate(self, dx: int, dy: int) -> "Region":
        return Region(self.x0 + dx, self.y0 + dy, self.width, self.height)

    def expand(self, margin: int) -> "Region":
        return Region(self.x0 - margin, self.y0 - margin,
                      self.width + 2 * margin, self.height + 2 * margin)

    def scale_down(self, factor: int) -> "Region":
        """Smallest region on the 1/factor lattice covering this region."""
        if factor == 1:
            return self
        x0 = self.x0 // factor
        y0 = self.y0 // factor
        x1 = -((-self.x1) // factor)
        y1 = -((-self.y1) // factor)
        return Region(x0, y0, x1 - x0, y1 - y0)


@dataclass(frozen=True)
class WindowLayout:
    """Square sliding-window geometry: side length, stride, and lattice offset.

    ``stride <= window`` guarantees that every lattice pixel is covered by
    at least one window.
    """

    window: int
    stride: int
    offset: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("window side must be >= 1")
        if not 1 <= self.stride <= self.window:
            raise ValueError("stride must satisfy 1 <= stride <= window")


def window_region(layout: WindowLayout, idx: WindowIndex) -> Region:
    """Region covered by the window at index ``(i, j)``."""
    i, j = idx
    ox, oy = layout.offset
    return Region(i * layout.stride + ox, j * layout.stride + oy,
                  layout.window, layout.window)


def _index_range(r0: int, extent: int, off: int, layout: WindowLayout) -> range:
    # window [k*s+off, k*s+off+H) intersects [r0, r0+extent)
    lo = -((off + layout.window - 1 - r0) // layout.stride)
    hi = (r0 + extent - 1 - off) // layout.stride
    return range(lo, hi + 1)


def windows_overlapping(layout: WindowLayout, r: Region) -> list[WindowIndex]:
    """All window indices whose regions intersect ``r``.

    Returned in canonical order: lexicographic on (j, i).  This order is
    the accumulation order used by every consumer in the package.
    """
    ox, oy = layout.offset
    irange = _index_range(r.x0, r.width, ox, layout)
    jrange = _index_range(r.y0, r.height, oy, layout)
    return [(i, j) for j in jrange for i in irange]


def max_window_overlap(layout: WindowLayout) -> int:
    """Uniform bound M on how many windows overlap any single window region."""
    per_axis = 2 * (-(-layout.window // layout.stride)) - 1
    return per_axis * per_axis


def region_union_cover(layout: WindowLayout, r: Region) -> Region:
    """Smallest region containing every window region that overlaps ``r``."""
    idxs = windows_overlapping(layout, r)
    cover = window_region(layout, idxs[0])
    for idx in idxs[1:]:
        cover = cover.bounding_union(window_region(layout, idx))
    return cover


def linear_weight_profile(window: int, epsilon: float = 0.01) -> np.ndarray:
    """1-D blending profile: 1 at the center, falling linearly to epsilon.

    Even window sizes use a flat two-sample peak so the profile stays
    symmetric.
    """
    if window < 1:
        raise ValueError("window side must be >= 1")
    if not 0.0 < epsilon <= 1.0:
        raise ValueError("epsilon must lie in (0, 1]")
    if window == 1:
        return np.ones(1, dtype=np.float64)
    half = window // 2
    if window % 2 == 1:
        d = np.abs(np.arange(window) - half) / half
    else:
        # distance from the nearer of the two central samples
        left = np.arange(window) - (half - 1)
        right = np.arange(window) - half
        d = np.minimum(np.abs(left), np.abs(right))
        d = d / max(half - 1, 1) if half > 1 else np.zeros(window)
    w = epsilon + (1.0 - epsilon) * (1.0 - d)
    return w.astype(np.float64)


def linear_weight_window(window: int, epsilon: float = 0.01) -> np.ndarray:
    """Separable 2-D weight map built from ``linear_weight_profile``.

    Strictly positive everywhere, which keeps the fusion denominator
    nonzero on every covered pixel.
    """
    w = linear_weight_profile(window, epsilon)
    return np.outer(w, w)
