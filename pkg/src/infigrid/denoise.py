"""Deterministic reference denoisers and per-window conditioning.

The denoisers stand in for trained models: they are pure functions of
(window tensor, conditioning, outer step index) with the same calling
contract a learned model would have.  The family is deliberately
contractive toward smooth fields so that window fusion has visible,
testable blending behavior.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoverageError, ShapeError
from .grid import Region, WindowLayout, WindowIndex, window_region
from .noise import STREAM_CONDITIONING, NoiseStream, noise_region
from .transforms import box_mean, upsample_nn

KINDS = ("identity", "shrink_smooth", "cond_affine", "multistep")


@dataclass(frozen=True)
class Conditioning:
    """Per-window conditioning: spatial channels, side scalars, and a mask.

    Mask entries are 0/1 at window resolution.  Entries of the spatial
    channels where the mask is 0 carry seed-consistent noise fill, never
    zeros.
    """

    channels: np.ndarray
    scalars: tuple[float, ...] = ()
    mask: np.ndarray | None = None


@dataclass(frozen=True)
class DenoiserSpec:
    """Configuration of one reference denoiser.

    kind:
      identity      returns the input unchanged
      shrink_smooth (1 - lambda_t) * x + lambda_t * boxblur(x, radius)
      cond_affine   shrink_smooth blended toward the first conditioning
                    channel by the mask
      multistep     iterates an inner one-step rule ``inner_steps`` times
                    with a geometric lambda schedule; the sampler sees a
                    single call
    """

    kind: str = "shrink_smooth"
    radius: int = 1
    lambdas: tuple[float, ...] = (0.5,)
    inner_kind: str = "shrink_smooth"
    inner_steps: int = 1
    lambda_start: float = 0.9
    lambda_end: float = 0.1
    channels: int = 1

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown denoiser kind {self.kind!r}")
        if self.kind == "multistep" and self.inner_kind not in ("shrink_smooth", "cond_affine"):
            raise ValueError("multistep inner kind must be shrink_smooth or cond_affine")

    def lambda_for(self, t: int) -> float:
        """Shrink factor for outer step t (1-based); last entry repeats."""
        if not self.lambdas:
            return 0.5
        return self.lambdas[min(t - 1, len(self.lambdas) - 1)]


def _shrink_smooth(x: np.ndarray, lam: float, radius: int) -> np.ndarray:
    if lam == 0.0:
        return x.copy()
    return (1.0 - lam) * x + lam * box_mean(x, radius)


def _cond_affine(x: np.ndarray, lam: float, radius: int, y: Conditioning | None) -> np.ndarray:
    base = _shrink_smooth(x, lam, radius)
    if y is None or y.mask is None:
        return base
    target = y.channels[0]
    return base + y.mask * (target - base)


def apply(spec: DenoiserSpec, x: np.ndarray, y: Conditioning | None, t: int) -> np.ndarray:
    """Run the denoiser on one window tensor at outer step ``t`` (1-based)."""
    if x.ndim != 3:
        raise ShapeError(f"window tensor must be (C, H, W), got shape {x.shape}")
    if y is not None and y.channels.shape[-2:] != x.shape[-2:]:
        raise ShapeError(
            f"conditioning spatial shape {y.channels.shape[-2:]} != window {x.shape[-2:]}")
    if spec.kind == "identity":
        return x.copy()
    lam = spec.lambda_for(t)
    if spec.kind == "shrink_smooth":
        return _shrink_smooth(x, lam, spec.radius)
    if spec.kind == "cond_affine":
        return _cond_affine(x, lam, spec.radius, y)
    # multistep: geometric interpolation between lambda_start and lambda_end
    k = spec.inner_steps
    out = x
    for step in range(k):
        frac = step / (k - 1) if k > 1 else 0.0
        lam_j = spec.lambda_start * (spec.lambda_end / spec.lambda_start) ** frac
        if spec.inner_kind == "shrink_smooth":
            out = _shrink_smooth(out, lam_j, spec.radius)
        else:
            out = _cond_affine(out, lam_j, spec.radius, y)
    return out


def conditioning_for_window(parent: np.ndarray,
                            parent_region: Region,
                            scale: int,
                            layout: WindowLayout,
                            idx: WindowIndex,
                            scalars: tuple[float, ...] = (),
                            seed: int = 0,
                            mask: np.ndarray | None = None) -> Conditioning:
    """Build window-resolution conditioning from coarser parent data.

    ``parent`` covers ``parent_region`` on a lattice ``scale`` times
    coarser than the window lattice.  The crop around the window is
    upsampled with nearest-neighbor replication; masked-out entries are
    filled with noise from a dedicated stream so the conditioning itself
    stays seed-consistent.
    """
    if parent.ndim == 2:
        parent = parent[None]
    win = window_region(layout, idx)
    need = win.scale_down(scale)
    if not parent_region.contains(need):
        raise CoverageError(
            f"parent data over {parent_region} does not cover required region {need}",
            missing=need)
    cx = need.x0 - parent_region.x0
    cy = need.y0 - parent_region.y0
    crop = parent[:, cy:cy + need.height, cx:cx + need.width]
    up = upsample_nn(crop, scale)
    # trim the up-scaled crop to the exact window footprint
    px = win.x0 - need.x0 * scale
    py = win.y0 - need.y0 * scale
    channels = np.ascontiguousarray(up[:, py:py + win.height, px:px + win.width])

    if mask is None:
        m = np.ones((win.height, win.width), dtype=channels.dtype)
    else:
        if mask.shape != parent.shape[-2:]:
            raise ShapeError(f"mask shape {mask.shape} != parent spatial {parent.shape[-2:]}")
        mcrop = mask[cy:cy + need.height, cx:cx + need.width]
        mu = upsample_nn(mcrop, scale)
        m = np.ascontiguousarray(mu[py:py + win.height, px:px + win.width]).astype(channels.dtype)

    if not np.all(m >= 1.0):
        hole = m < 1.0
        stream = NoiseStream(seed, STREAM_CONDITIONING)
        fill = noise_region(stream, win, channels.shape[0]).astype(channels.dtype)
        channels = np.where(hole[None], fill, channels)
    return Conditioning(channels=channels, scalars=tuple(scalars), mask=m)


def coarse_patch_features(elevation: np.ndarray, patch: int) -> np.ndarray:
    """Per-patch summary features: mean, 5th percentile, availability mask.

    The percentile uses the lower nearest-rank convention (rank
    ``ceil(0.05 * n)`` of the sorted patch).  Output is a 3-channel
    tensor with one cell per patch.
    """
    if elevation.ndim == 3:
        elevation = elevation[0]
    h, w = elevation.shape
    if h % patch or w % patch:
        raise ShapeError(f"region {h}x{w} not divisible by patch size {patch}")
    blocks = elevation.reshape(h // patch, patch, w // patch, patch).transpose(0, 2, 1, 3)
    flat = blocks.reshape(h // patch, w // patch, patch * patch)
    means = flat.mean(axis=-1)
    srt = np.sort(flat, axis=-1)
    rank = max(math.ceil(0.05 * patch * patch), 1)
    p5 = srt[..., rank - 1]
    ones = np.ones_like(means)
    return np.stack([means, p5, ones], axis=0)
