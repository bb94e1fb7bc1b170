"""The lazy window-fusion sampling engine.

Generation runs T outer steps over an unbounded lattice.  Step t holds an
accumulator tensor with one extra channel: data channels carry the
weighted sum of denoiser outputs over processed windows, the last channel
the summed weights; their ratio is the step's image.  Serving a region at
step t materializes exactly the windows overlapping it, recursively
pulling the union cover of those windows from step t+1, down to the seed
noise field at step T.  All state lives in a ``TileStore``, so queries
are memoized, bounded in cost, order-invariant, and optionally
persistent.
"""

from __future__ import annotations

import random
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import denoise
from .denoise import DenoiserSpec, conditioning_for_window
from .grid import (Region, WindowIndex, WindowLayout, linear_weight_window,
                   window_region, windows_overlapping)
from .noise import STREAM_BASE, NoiseStream, noise_region
from .store import Dependency, TensorSpec, TileStore, divide_weighted


@dataclass(frozen=True)
class ConditioningSource:
    """Where a sampler gets per-window conditioning.

    ``handle`` names a store tensor on a lattice ``scale`` times coarser
    than the sampler's; ``mask_channel`` optionally selects a parent
    channel interpreted as the availability mask.
    """

    handle: str
    scale: int = 1
    scalars: tuple[float, ...] = ()
    mask_channel: int | None = None
    margin: int = 1


@dataclass(frozen=True)
class SamplerConfig:
    """Everything needed to define one seed-consistent sampling process."""

    steps: int
    layout: WindowLayout | tuple[WindowLayout, ...]
    denoiser: DenoiserSpec
    seed: int = 0
    channels: int = 1
    epsilon: float = 0.01
    weights: tuple[np.ndarray, ...] | None = None  # per-step maps; default linear
    conditioning: ConditioningSource | None = None
    base: object = None  # callable (Region, channels) -> array; default seed noise
    cache_method: str = "direct"
    cache_limit: int | None = None
    dtype: type = np.float32
    name: str = "sampler"

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")

    def layout_for(self, t: int) -> WindowLayout:
        if isinstance(self.layout, WindowLayout):
            return self.layout
        return self.layout[t]

    def weight_for(self, t: int) -> np.ndarray:
        if self.weights is not None:
            w = self.weights[t] if not isinstance(self.weights, np.ndarray) else self.weights
        else:
            w = linear_weight_window(self.layout_for(t).window, self.epsilon)
        if np.any(w <= 0):
            raise ValueError("weight maps must be strictly positive")
        if w.shape != (self.layout_for(t).window,) * 2:
            raise ValueError(f"weight map shape {w.shape} != window")
        return w


class SamplerState:
    """Accumulators, processed sets, and call counters bound to a store.

    Construction only registers tensors; all computation is lazy.
    Re-attaching a state with the same name to a (possibly reopened)
    store resumes from whatever that store already holds.
    """

    def __init__(self, config: SamplerConfig, store: TileStore):
        self.config = config
        self.store = store
        self.handles: dict[int, str] = {}
        T = config.steps
        for t in range(T - 1, -1, -1):
            deps = []
            if t < T - 1:
                deps.append(Dependency(self.handles[t + 1], margin=0, scale=1))
            if config.conditioning is not None:
                c = config.conditioning
                deps.append(Dependency(c.handle, margin=c.margin, scale=c.scale))
            spec = TensorSpec(
                name=f"{config.name}.t{t}",
                channels=config.channels + 1,
                layout=config.layout_for(t),
                cache_method=config.cache_method,
                cache_limit=config.cache_limit,
                dependencies=tuple(deps),
                dtype=config.dtype,
                weighted=True,
            )
            self.handles[t] = store.create_tensor(spec, self._make_generator(t))

    # ------------------------------------------------------------------

    def _base_values(self, r: Region) -> np.ndarray:
        cfg = self.config
        if cfg.base is not None:
            vals = np.asarray(cfg.base(r, cfg.channels), dtype=cfg.dtype)
        else:
            stream = NoiseStream(cfg.seed, STREAM_BASE)
            vals = noise_region(stream, r, cfg.channels).astype(cfg.dtype)
        if vals.shape != (cfg.channels, r.height, r.width):
            raise ValueError(f"base field returned shape {vals.shape} for region {r}")
        return vals

    def _make_generator(self, t: int):
        cfg = self.config
        layout = cfg.layout_for(t)
        weight = cfg.weight_for(t).astype(cfg.dtype)
        outer_step = t + 1  # the step index of the denoiser call producing J_t
        has_parent = t < cfg.steps - 1

        def gen(idx: WindowIndex, parents, ctx):
            win = window_region(layout, idx)
            if has_parent:
                x = np.ascontiguousarray(parents[0][0])
            else:
                x = self._base_values(win)
            y = None
            if cfg.conditioning is not None:
                slab, reg = parents[-1]
                c = cfg.conditioning
                mask = slab[c.mask_channel] if c.mask_channel is not None else None
                y = conditioning_for_window(slab, reg, c.scale, layout, idx,
                                            scalars=c.scalars, seed=cfg.seed, mask=mask)
            den = denoise.apply(cfg.denoiser, x, y, outer_step).astype(cfg.dtype)
            contrib = np.empty((cfg.channels + 1, layout.window, layout.window),
                               dtype=cfg.dtype)
            contrib[:-1] = weight[None] * den
            contrib[-1] = weight
            return contrib

        return gen

    # ------------------------------------------------------------------

    def query(self, t: int, r: Region) -> np.ndarray:
        """The step-t image on ``r``: pure noise at t = T, fused output below."""
        if not 0 <= t <= self.config.steps:
            raise ValueError(f"step {t} outside [0, {self.config.steps}]")
        if t == self.config.steps:
            return self._base_values(r)
        raw = self.store.read(self.handles[t], r)
        return divide_weighted(raw)

    def denoiser_call_count(self, t: int) -> int:
        """Denoiser invocations that produced step-t contributions so far."""
        return self.store.generator_calls(self.handles[t])

    def total_denoiser_calls(self) -> int:
        return sum(self.denoiser_call_count(t) for t in range(self.config.steps))

    # ------------------------------------------------------------------

    def plan_rounds(self, t: int, r: Region) -> list[list[tuple[WindowIndex, int]]]:
        """Batched evaluation schedule for serving ``query(t, r)``.

        Each batch's denoiser calls depend only on earlier batches; the
        batch count never exceeds T - t.  Executing the schedule in any
        intra-batch order and then querying yields output bit-identical
        to a plain sequential query.
        """
        cfg = self.config
        per_level: dict[int, list[WindowIndex]] = {}
        need = r
        for level in range(t, cfg.steps):
            layout = cfg.layout_for(level)
            pending = [i for i in windows_overlapping(layout, need)
                       if not self.store.is_materialized(self.handles[level], i)]
            if not pending:
                break
            per_level[level] = pending
            cover = window_region(layout, pending[0])
            for idx in pending[1:]:
                cover = cover.bounding_union(window_region(layout, idx))
            need = cover
        return [[(idx, level) for idx in per_level[level]]
                for level in sorted(per_level, reverse=True)]

    def execute_rounds(self, schedule, rng: random.Random | None = None,
                       max_workers: int = 1):
        """Run a ``plan_rounds`` schedule, optionally shuffled or threaded.

        Contributions commit into the store's caches; assembly order is
        canonical regardless of completion order, so the subsequent query
        is bit-identical to sequential execution.
        """
        for batch in schedule:
            items = list(batch)
            if rng is not None:
                rng.shuffle(items)
            if max_workers > 1:
                with ThreadPoolExecutor(max_workers=max_workers) as pool:
                    list(pool.map(lambda it: self.store.ensure_window(
                        self.handles[it[1]], it[0]), items))
            else:
                for idx, level in items:
                    self.store.ensure_window(self.handles[level], idx)


def sample(config: SamplerConfig, store: TileStore, r: Region) -> np.ndarray:
    """Convenience wrapper: attach a state to the store and serve one region."""
    state = SamplerState(config, store)
    return state.query(0, r)
