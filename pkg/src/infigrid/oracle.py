"""Independent reference implementations for testing the engine.

Everything here is written to be obviously correct rather than fast:
dense finite-canvas window fusion evaluated directly from its defining
sum, a brute-force scan for the window-overlap map, and an uncached
recursion-tree count of denoiser calls.  Oracles accumulate in 64-bit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import denoise
from .denoise import DenoiserSpec
from .grid import (Region, WindowIndex, WindowLayout, region_union_cover,
                   window_region, windows_overlapping)
from .noise import NoiseStream, noise_region


@dataclass
class DenseCanvas:
    """A finite multi-channel tensor with explicit lattice bounds."""

    region: Region
    data: np.ndarray  # (C, H, W) float64

    def crop(self, r: Region) -> np.ndarray:
        assert self.region.contains(r), f"{r} outside canvas {self.region}"
        return self.data[:, r.y0 - self.region.y0:r.y1 - self.region.y0,
                         r.x0 - self.region.x0:r.x1 - self.region.x0]


def dense_fusion_step(canvas: DenseCanvas,
                      target: Region,
                      layout: WindowLayout,
                      weights: np.ndarray,
                      spec: DenoiserSpec,
                      t: int,
                      conditioning=None) -> DenseCanvas:
    """One fusion step evaluated densely from its defining weighted sum.

    Every window overlapping ``target`` is denoised on the canvas and the
    weighted average formed in canonical window order with float64
    accumulation.  Division by zero (pixels no window covers) yields 0.
    """
    c = canvas.data.shape[0]
    w64 = weights.astype(np.float64)
    num = np.zeros((c, target.height, target.width), dtype=np.float64)
    den = np.zeros((target.height, target.width), dtype=np.float64)
    for idx in windows_overlapping(layout, target):
        win = window_region(layout, idx)
        x = canvas.crop(win).astype(np.float64)
        y = conditioning(idx) if conditioning is not None else None
        val = denoise.apply(spec, x, y, t).astype(np.float64)
        ov = win.intersection(target)
        if ov is None:
            continue
        dst = (slice(ov.y0 - target.y0, ov.y1 - target.y0),
               slice(ov.x0 - target.x0, ov.x1 - target.x0))
        src = (slice(ov.y0 - win.y0, ov.y1 - win.y0),
               slice(ov.x0 - win.x0, ov.x1 - win.x0))
        num[:, dst[0], dst[1]] += (w64 * val)[:, src[0], src[1]]
        den[dst] += w64[src]
    out = np.zeros_like(num)
    np.divide(num, den[None], out=out, where=den[None] > 0)
    return DenseCanvas(region=target, data=out)


def dense_trajectory(seed: int,
                     steps: int,
                     layout: WindowLayout,
                     weights: np.ndarray,
                     spec: DenoiserSpec,
                     target: Region,
                     channels: int = 1) -> dict[int, DenseCanvas]:
    """Full dense evaluation of every step's image over ``target``.

    Works outward: step t needs step t+1 on the union cover of its
    windows, so the canvases shrink from the noise level down to the
    requested region.  Returns a canvas per step index (T..0).
    """
    regions = {0: target}
    for t in range(1, steps + 1):
        regions[t] = region_union_cover(layout, regions[t - 1])
    noise = noise_region(NoiseStream(seed), regions[steps], channels).astype(np.float64)
    out = {steps: DenseCanvas(regions[steps], noise)}
    for t in range(steps - 1, -1, -1):
        out[t] = dense_fusion_step(out[t + 1], regions[t], layout,
                                   weights, spec, t + 1)
    return out


def brute_force_windows(layout: WindowLayout, r: Region, search_radius: int) -> set[WindowIndex]:
    """Exhaustive scan for the indices whose windows intersect ``r``."""
    found = set()
    for j in range(-search_radius, search_radius + 1):
        for i in range(-search_radius, search_radius + 1):
            if window_region(layout, (i, j)).intersection(r) is not None:
                found.add((i, j))
    return found


def count_denoiser_calls_naive(steps: int, layout: WindowLayout, r: Region) -> int:
    """Denoiser calls a cache-free recursive evaluation of step 0 would make."""

    def cost(t: int, region: Region) -> int:
        if t == steps:
            return 0
        total = 0
        for idx in windows_overlapping(layout, region):
            total += 1 + cost(t + 1, window_region(layout, idx))
        return total

    return cost(0, r)
