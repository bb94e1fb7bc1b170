"""Hierarchical coarse-to-fine generation as a DAG of store tensors.

A pipeline chains samplers at progressively finer resolutions.  The
coarse stage starts from a user-supplied map (optionally corrupted with
per-channel noise) or pure seed noise.  Each subsequent stage runs its
own window-fusion sampler conditioned on summary features of the stage
above, so reading any region of the finest tensor pulls exactly the
ancestor data it needs.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .denoise import DenoiserSpec, coarse_patch_features
from .errors import ConfigError, StoreFormatError
from .grid import Region, WindowLayout
from .noise import STREAM_CORRUPTION, NoiseStream, noise_region
from .sampler import ConditioningSource, SamplerConfig, SamplerState
from .store import Dependency, TensorSpec, TileStore

RASTER_MAGIC = b"IGUSRMAP"


# ----------------------------------------------------------------------
# plain binary rasters (user map input and generation output)

def save_raster(path: str, array: np.ndarray):
    """Write a (C, H, W) float32 raster: magic, u32 w/h/c, row-major data."""
    arr = np.asarray(array, dtype="<f4")
    if arr.ndim == 2:
        arr = arr[None]
    c, h, w = arr.shape
    with open(path, "wb") as f:
        f.write(struct.pack("<8sIII", RASTER_MAGIC, w, h, c))
        f.write(np.ascontiguousarray(arr).tobytes())


def load_raster(path: str) -> np.ndarray:
    with open(path, "rb") as f:
        head = f.read(20)
        if len(head) != 20:
            raise StoreFormatError(f"{path}: truncated raster header")
        magic, w, h, c = struct.unpack("<8sIII", head)
        if magic != RASTER_MAGIC:
            raise StoreFormatError(f"{path}: bad raster magic {magic!r}")
        payload = f.read(c * h * w * 4)
        if len(payload) != c * h * w * 4:
            raise StoreFormatError(f"{path}: truncated raster payload")
        data = np.frombuffer(payload, dtype="<f4")
        return data.reshape(c, h, w).copy()


# ----------------------------------------------------------------------
# user map sources

class RasterMap:
    """Finite raster serving as a coarse map; clamped or tiled beyond its extent."""

    def __init__(self, array: np.ndarray, mode: str = "clamp"):
        arr = np.asarray(array, dtype=np.float32)
        if arr.ndim == 2:
            arr = arr[None]
        if mode not in ("clamp", "tile"):
            raise ConfigError(f"unknown raster extension mode {mode!r}")
        self.array = arr
        self.mode = mode

    def values(self, r: Region, channels: int) -> np.ndarray:
        c, h, w = self.array.shape
        if channels > c:
            raise ConfigError(f"user map has {c} channels, {channels} requested")
        xs = np.arange(r.x0, r.x1)
        ys = np.arange(r.y0, r.y1)
        if self.mode == "clamp":
            xs = np.clip(xs, 0, w - 1)
            ys = np.clip(ys, 0, h - 1)
        else:
            xs = xs % w
            ys = ys % h
        return self.array[:channels][:, ys[:, None], xs[None, :]]


class ProceduralMap:
    """Smooth deterministic value noise keyed by seed; infinite extent.

    Gaussian values on a coarse lattice of spacing ``cell`` are bilinearly
    interpolated, giving a cheap stand-in for a hand-drawn layout.
    """

    def __init__(self, seed: int, cell: int = 16, stream: int = 7):
        if cell < 1:
            raise ConfigError("cell must be >= 1")
        self.seed = seed
        self.cell = cell
        self.stream = stream

    def values(self, r: Region, channels: int) -> np.ndarray:
        cell = self.cell
        gx0 = r.x0 // cell
        gy0 = r.y0 // cell
        gx1 = (r.x1 - 1) // cell + 1
        gy1 = (r.y1 - 1) // cell + 1
        lattice = noise_region(NoiseStream(self.seed, self.stream),
                               Region(gx0, gy0, gx1 - gx0 + 1, gy1 - gy0 + 1), channels)
        xs = np.arange(r.x0, r.x1)
        ys = np.arange(r.y0, r.y1)
        fx = (xs / cell) - gx0
        fy = (ys / cell) - gy0
        ix = np.floor(fx).astype(int)
        iy = np.floor(fy).astype(int)
        tx = (fx - ix)[None, None, :]
        ty = (fy - iy)[None, :, None]
        v00 = lattice[:, iy[:, None], ix[None, :]]
        v01 = lattice[:, iy[:, None], ix[None, :] + 1]
        v10 = lattice[:, iy[:, None] + 1, ix[None, :]]
        v11 = lattice[:, iy[:, None] + 1, ix[None, :] + 1]
        top = v00 * (1 - tx) + v01 * tx
        bot = v10 * (1 - tx) + v11 * tx
        return (top * (1 - ty) + bot * ty).astype(np.float32)


def corrupt_user_map(values: np.ndarray, levels, seed: int, r: Region) -> np.ndarray:
    """Add per-channel Gaussian noise scaled by ``levels`` (0 keeps bits)."""
    levels = tuple(levels)
    if len(levels) != values.shape[0]:
        raise ConfigError(f"{len(levels)} noise levels for {values.shape[0]} channels")
    if any(l < 0 for l in levels):
        raise ConfigError("corruption noise levels must be >= 0")
    out = values.copy()
    for c, level in enumerate(levels):
        if level == 0.0:
            continue
        stream = NoiseStream(seed, STREAM_CORRUPTION + c)
        out[c] = out[c] + np.float32(level) * noise_region(stream, r, 1)[0]
    return out


# ----------------------------------------------------------------------
# pipeline configuration

@dataclass(frozen=True)
class StageConfig:
    """One resolution level: a sampler plus its link to the parent stage."""

    steps: int
    window: int
    stride: int
    denoiser: DenoiserSpec
    scale: int = 1           # lattice refinement relative to the previous stage
    channels: int = 1
    epsilon: float = 0.01
    corruption: tuple[float, ...] = ()  # coarse stage only
    patch: int = 4           # feature patch size feeding the next stage
    scalars: tuple[float, ...] = ()
    cond_margin: int = 1


@dataclass(frozen=True)
class PipelineConfig:
    stages: tuple[StageConfig, ...]
    cache_method: str = "direct"
    cache_limit: int | None = None
    dtype: type = np.float32

    def __post_init__(self):
        if not self.stages:
            raise ConfigError("pipeline needs at least one stage")
        if self.stages[0].scale != 1:
            raise ConfigError("stage 0 has no parent; its scale must be 1")
        for k, st in enumerate(self.stages[1:], start=1):
            if st.scale < 1:
                raise ConfigError(f"stage {k} scale must be >= 1")
            if st.corruption:
                raise ConfigError("corruption noise applies to the coarse stage only")


def build_pipeline(store: TileStore, cfg: PipelineConfig, seed: int,
                   user_map=None, name: str = "pipe") -> str:
    """Register all stage tensors; return the handle of the finest output.

    Reading any region of the returned (weight-carrying) tensor via
    ``store.read_values`` triggers exactly the ancestor reads required.
    """
    prev_output = None
    prev_patch = 1
    for k, st in enumerate(cfg.stages):
        base = None
        if k == 0 and user_map is not None:
            levels = st.corruption if st.corruption else (0.0,) * st.channels

            def base(r, channels, _um=user_map, _lv=levels):
                return corrupt_user_map(_um.values(r, channels), _lv, seed, r)

        conditioning = None
        if k > 0:
            feat = _register_features(store, cfg, name, k - 1, prev_output,
                                      cfg.stages[k - 1])
            conditioning = ConditioningSource(
                handle=feat, scale=st.scale * prev_patch, scalars=st.scalars,
                mask_channel=2, margin=st.cond_margin)
        sampler_cfg = SamplerConfig(
            steps=st.steps,
            layout=WindowLayout(st.window, st.stride),
            denoiser=st.denoiser,
            seed=seed + k,  # decorrelate base noise across stages
            channels=st.channels,
            epsilon=st.epsilon,
            conditioning=conditioning,
            base=base,
            cache_method=cfg.cache_method,
            cache_limit=cfg.cache_limit,
            dtype=cfg.dtype,
            name=f"{name}.stage{k}",
        )
        state = SamplerState(sampler_cfg, store)
        prev_output = state.handles[0]
        prev_patch = st.patch
    return prev_output


def _register_features(store: TileStore, cfg: PipelineConfig, name: str,
                       parent_idx: int, parent_handle: str, parent_stage: StageConfig) -> str:
    """Summary-feature tensor over a stage's output (mean, p5, mask)."""
    fname = f"{name}.stage{parent_idx}.features"
    patch = parent_stage.patch
    layout = WindowLayout(16, 16)  # disjoint tiling: cells never overlap

    def gen(idx, parents, ctx):
        slab, _reg = parents[0]
        return coarse_patch_features(slab[0], patch).astype(cfg.dtype)

    spec = TensorSpec(
        name=fname,
        channels=3,
        layout=layout,
        cache_method=cfg.cache_method,
        cache_limit=cfg.cache_limit,
        dependencies=(Dependency(parent_handle, margin=0, inv_scale=patch),),
        dtype=cfg.dtype,
        weighted=False,
    )
    return store.create_tensor(spec, gen)
