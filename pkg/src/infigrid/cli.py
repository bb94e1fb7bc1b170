"""Command-line surface: generate, render, benchmark, verify.

Every command is deterministic given its config and arguments (timing
numbers aside).  Exit codes: 0 success, 1 failed verification check,
2 configuration or argument error, 3 generation or I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import random
import re
import statistics
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import oracle, transforms
from .denoise import DenoiserSpec
from .errors import ConfigError, InfigridError, StoreError
from .grid import Region, WindowLayout
from .pipeline import (PipelineConfig, ProceduralMap, RasterMap, StageConfig,
                       build_pipeline, load_raster, save_raster)
from .sampler import SamplerConfig, SamplerState
from .store import TileStore, open_store

_DTYPES = {"float32": np.float32, "float64": np.float64}


# ----------------------------------------------------------------------
# configuration document

_TOP_KEYS = {"seed", "stages", "cache_method", "cache_limit", "tile_size",
             "store_path", "dtype", "user_map", "name"}
_STAGE_KEYS = {"steps", "window", "stride", "scale", "channels", "epsilon",
               "denoiser", "corruption", "patch", "scalars", "cond_margin"}
_DENOISER_KEYS = {"kind", "radius", "lambdas", "inner_kind", "inner_steps",
                  "lambda_start", "lambda_end"}
_USER_MAP_KEYS = {"kind", "path", "mode", "cell"}


def _reject_unknown(obj: dict, allowed: set, where: str):
    unknown = sorted(set(obj) - allowed)
    if unknown:
        raise ConfigError(f"unknown key(s) {unknown} in {where}")


@dataclass(frozen=True)
class RunConfig:
    """Parsed configuration document; serializes back to an equivalent dict."""

    seed: int = 0
    stages: tuple[dict, ...] = ()
    cache_method: str = "direct"
    cache_limit: int | None = None
    tile_size: int = 256
    store_path: str | None = None
    dtype: str = "float32"
    user_map: dict | None = None
    name: str = "pipe"

    def to_dict(self) -> dict:
        d = {"seed": self.seed, "stages": [dict(s) for s in self.stages],
             "cache_method": self.cache_method, "tile_size": self.tile_size,
             "dtype": self.dtype, "name": self.name}
        if self.cache_limit is not None:
            d["cache_limit"] = self.cache_limit
        if self.store_path is not None:
            d["store_path"] = self.store_path
        if self.user_map is not None:
            d["user_map"] = dict(self.user_map)
        return d

    def pipeline_config(self) -> PipelineConfig:
        stages = tuple(_stage_from_dict(s) for s in self.stages)
        return PipelineConfig(stages=stages, cache_method=self.cache_method,
                              cache_limit=self.cache_limit,
                              dtype=_DTYPES[self.dtype])

    def make_user_map(self):
        um = self.user_map
        if um is None:
            return None
        if um["kind"] == "raster":
            return RasterMap(load_raster(um["path"]), mode=um.get("mode", "clamp"))
        return ProceduralMap(self.seed, cell=um.get("cell", 16))


def _denoiser_from_dict(d: dict, where: str) -> DenoiserSpec:
    _reject_unknown(d, _DENOISER_KEYS, where)
    try:
        return DenoiserSpec(
            kind=d.get("kind", "shrink_smooth"),
            radius=int(d.get("radius", 1)),
            lambdas=tuple(float(v) for v in d.get("lambdas", (0.5,))),
            inner_kind=d.get("inner_kind", "shrink_smooth"),
            inner_steps=int(d.get("inner_steps", 1)),
            lambda_start=float(d.get("lambda_start", 0.9)),
            lambda_end=float(d.get("lambda_end", 0.1)),
        )
    except ValueError as e:
        raise ConfigError(f"{where}: {e}") from e


def _stage_from_dict(d: dict) -> StageConfig:
    return StageConfig(
        steps=int(d["steps"]),
        window=int(d["window"]),
        stride=int(d["stride"]),
        denoiser=_denoiser_from_dict(d.get("denoiser", {}), "stage denoiser"),
        scale=int(d.get("scale", 1)),
        channels=int(d.get("channels", 1)),
        epsilon=float(d.get("epsilon", 0.01)),
        corruption=tuple(float(v) for v in d.get("corruption", ())),
        patch=int(d.get("patch", 4)),
        scalars=tuple(float(v) for v in d.get("scalars", ())),
        cond_margin=int(d.get("cond_margin", 1)),
    )


def parse_config(doc: dict) -> RunConfig:
    """Validate a configuration dict; unknown keys anywhere are rejected."""
    if not isinstance(doc, dict):
        raise ConfigError("config document must be a JSON object")
    _reject_unknown(doc, _TOP_KEYS, "config")
    stages = doc.get("stages")
    if not isinstance(stages, list) or not stages:
        raise ConfigError("config needs a non-empty 'stages' list")
    for k, st in enumerate(stages):
        if not isinstance(st, dict):
            raise ConfigError(f"stage {k} must be an object")
        _reject_unknown(st, _STAGE_KEYS, f"stage {k}")
        for req in ("steps", "window", "stride"):
            if req not in st:
                raise ConfigError(f"stage {k} is missing required key {req!r}")
        if "denoiser" in st:
            _reject_unknown(st["denoiser"], _DENOISER_KEYS, f"stage {k} denoiser")
    um = doc.get("user_map")
    if um is not None:
        _reject_unknown(um, _USER_MAP_KEYS, "user_map")
        if um.get("kind") not in ("raster", "procedural"):
            raise ConfigError("user_map kind must be 'raster' or 'procedural'")
        if um["kind"] == "raster" and "path" not in um:
            raise ConfigError("raster user_map needs a 'path'")
    dtype = doc.get("dtype", "float32")
    if dtype not in _DTYPES:
        raise ConfigError(f"dtype must be one of {sorted(_DTYPES)}, got {dtype!r}")
    cm = doc.get("cache_method", "direct")
    if cm not in ("direct", "indirect"):
        raise ConfigError(f"cache_method must be 'direct' or 'indirect', got {cm!r}")
    cfg = RunConfig(
        seed=int(doc.get("seed", 0)),
        stages=tuple(dict(s) for s in stages),
        cache_method=cm,
        cache_limit=doc.get("cache_limit"),
        tile_size=int(doc.get("tile_size", 256)),
        store_path=doc.get("store_path"),
        dtype=dtype,
        user_map=dict(um) if um is not None else None,
        name=doc.get("name", "pipe"),
    )
    cfg.pipeline_config()  # validate stage contents eagerly
    return cfg


def load_config(path: str) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as f:
            doc = json.load(f)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"config {path} is not valid JSON: {e}") from e
    return parse_config(doc)


def parse_region(text: str) -> Region:
    """Parse "x0,y0,WxH" with signed origin coordinates."""
    try:
        x0s, y0s, size = text.split(",")
        ws, hs = size.split("x")
        r = Region(int(x0s), int(y0s), int(ws), int(hs))
    except ValueError as e:
        raise ConfigError(f"bad region {text!r}, expected x0,y0,WxH: {e}") from e
    if r.width < 1 or r.height < 1:
        raise ConfigError(f"region {text!r} must have positive width and height")
    return r


def _open_or_create_store(cfg: RunConfig) -> TileStore:
    if cfg.store_path is not None and os.path.exists(cfg.store_path):
        return open_store(cfg.store_path, tile_size=cfg.tile_size)
    return TileStore(tile_size=cfg.tile_size, path=cfg.store_path)


# ----------------------------------------------------------------------
# gen

def cmd_gen(args) -> int:
    try:
        cfg = load_config(args.config)
        region = parse_region(args.region)
        store = _open_or_create_store(cfg)
        handle = build_pipeline(store, cfg.pipeline_config(), cfg.seed,
                                user_map=cfg.make_user_map(), name=cfg.name)
    except (ConfigError, StoreError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    try:
        values = store.read_values(handle, region)
        save_raster(args.output, values)
        if cfg.store_path is not None:
            store.flush()
    except (InfigridError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    v64 = values.astype(np.float64)
    print(f"min={v64.min():.6g} max={v64.max():.6g} mean={v64.mean():.6g}")
    return 0


# ----------------------------------------------------------------------
# render

def hillshade(elev: np.ndarray, azimuth_deg: float = 315.0,
              altitude_deg: float = 45.0) -> np.ndarray:
    """Horn 3x3 slope shading, clamped to [0, 255] as uint8.

    Purely cosmetic and fully fixed (azimuth 315, altitude 45) so renders
    are byte-reproducible.
    """
    z = np.pad(elev.astype(np.float64), 1, mode="edge")
    a, b, c = z[:-2, :-2], z[:-2, 1:-1], z[:-2, 2:]
    d, f = z[1:-1, :-2], z[1:-1, 2:]
    g, h, i = z[2:, :-2], z[2:, 1:-1], z[2:, 2:]
    dzdx = ((c + 2 * f + i) - (a + 2 * d + g)) / 8.0
    dzdy = ((g + 2 * h + i) - (a + 2 * b + c)) / 8.0
    zenith = math.radians(90.0 - altitude_deg)
    az = math.radians(360.0 - azimuth_deg + 90.0)
    slope = np.arctan(np.hypot(dzdx, dzdy))
    aspect = np.arctan2(dzdy, -dzdx)
    shade = 255.0 * (np.cos(zenith) * np.cos(slope) +
                     np.sin(zenith) * np.sin(slope) * np.cos(az - aspect))
    return np.clip(np.rint(shade), 0, 255).astype(np.uint8)


def write_pgm(path: str, image: np.ndarray):
    """Write a 2-D uint8 array as binary PGM (P5)."""
    h, w = image.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(np.ascontiguousarray(image).tobytes())


def cmd_render(args) -> int:
    try:
        raster = load_raster(args.raster)
    except (InfigridError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    elev = raster[0].astype(np.float64)
    if args.signed_square:
        elev = transforms.signed_square(elev)
    try:
        if args.hillshade:
            image = hillshade(elev)
        else:
            image = transforms.normalize_heightmap_u8(elev[None])[0, 0]
        write_pgm(args.output, image)
    except (InfigridError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    print(f"wrote {args.output} ({elev.shape[1]}x{elev.shape[0]})")
    return 0


# ----------------------------------------------------------------------
# bench

def _translation_period(cfg: RunConfig) -> int:
    """Finest-lattice translation step that shifts every stage's window and
    feature lattice onto itself, so shifted queries do identical work."""
    stages = [_stage_from_dict(dict(s)) for s in cfg.stages]
    unit = 1  # finest pixels per pixel of the stage under consideration
    period = 1
    for k in range(len(stages) - 1, -1, -1):
        st = stages[k]
        period = math.lcm(period, st.stride * unit)
        if k < len(stages) - 1:
            period = math.lcm(period, 16 * st.patch * unit)
        if k > 0:
            unit *= st.scale
    return period


def _percentiles(xs) -> tuple[float, float, float]:
    p = np.percentile(np.asarray(xs, dtype=np.float64), [5, 50, 95])
    return float(p[0]), float(p[1]), float(p[2])


def _report_line(label: str, times, calls):
    mean = statistics.fmean(times)
    std = statistics.pstdev(times) if len(times) > 1 else 0.0
    p5, p50, p95 = _percentiles(times)
    print(f"{label} mean={mean * 1e3:.3f}ms std={std * 1e3:.3f}ms "
          f"(p5={p5 * 1e3:.3f}ms, p50={p50 * 1e3:.3f}ms, p95={p95 * 1e3:.3f}ms)")
    uniq = sorted(set(calls))
    same = "yes" if len(uniq) == 1 else "no"
    print(f"{label} denoiser-calls={uniq[0] if len(uniq) == 1 else uniq} "
          f"identical-across-locations={same}")


def cmd_bench(args) -> int:
    try:
        cfg = load_config(args.config)
        if args.size < 1 or args.trials < 1:
            raise ConfigError("size and trials must be positive")
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    rng = random.Random(cfg.seed ^ 0xB1E55ED)
    size = args.size
    period = _translation_period(cfg)
    ttft_times, ttst_times = [], []
    ttft_calls, ttst_calls = [], []
    for _ in range(args.trials):
        # sample on the pipeline's translation lattice so window counts,
        # and hence generator-call columns, are location-invariant
        x = rng.randrange(-10 ** 6 // period, 10 ** 6 // period) * period
        y = rng.randrange(-10 ** 6 // period, 10 ** 6 // period) * period
        store = TileStore(tile_size=cfg.tile_size)
        t0 = time.perf_counter()
        handle = build_pipeline(store, cfg.pipeline_config(), cfg.seed,
                                user_map=cfg.make_user_map(), name=cfg.name)
        store.read_values(handle, Region(x, y, size, size))
        t1 = time.perf_counter()
        calls_first = store.total_generator_calls()
        store.read_values(handle, Region(x + size, y, size, size))
        t2 = time.perf_counter()
        ttft_times.append(t1 - t0)
        ttst_times.append(t2 - t1)
        ttft_calls.append(calls_first)
        ttst_calls.append(store.total_generator_calls() - calls_first)
    print(f"bench trials={args.trials} region={size}x{size}")
    _report_line("TTFT", ttft_times, ttft_calls)
    _report_line("TTST", ttst_times, ttst_calls)
    return 0


# ----------------------------------------------------------------------
# verify

@dataclass
class _Checker:
    failures: list = field(default_factory=list)

    def check(self, name: str, ok: bool, detail: str = ""):
        status = "PASS" if ok else "FAIL"
        print(f"{status} {name}{' ' + detail if detail else ''}")
        if not ok:
            self.failures.append(name)


def _stage0_sampler(cfg: RunConfig, store: TileStore, name: str) -> SamplerState:
    st = _stage_from_dict(dict(cfg.stages[0]))
    sampler_cfg = SamplerConfig(
        steps=st.steps, layout=WindowLayout(st.window, st.stride),
        denoiser=st.denoiser, seed=cfg.seed, channels=st.channels,
        epsilon=st.epsilon, cache_method=cfg.cache_method,
        cache_limit=cfg.cache_limit, dtype=_DTYPES[cfg.dtype], name=name)
    return SamplerState(sampler_cfg, store)


def _verify_oracle(cfg: RunConfig, ck: _Checker, threads: int):
    target = Region(-7, 5, 64, 64)
    state = _stage0_sampler(cfg, TileStore(), "verify.oracle")
    scfg = state.config
    dense = oracle.dense_trajectory(cfg.seed, scfg.steps, scfg.layout_for(0),
                                    scfg.weight_for(0).astype(np.float64),
                                    scfg.denoiser, target, scfg.channels)
    tol = 0.0 if cfg.dtype == "float64" else 1e-5
    worst = 0.0
    for t in range(scfg.steps):
        got = state.query(t, target).astype(np.float64)
        want = dense[t].crop(target)
        # deviation relative to the oracle field's magnitude
        dev = float(np.max(np.abs(got - want)) / max(float(np.max(np.abs(want))), 1e-12))
        worst = max(worst, dev)
    ck.check("oracle.dense-fusion", worst <= tol, f"max_rel_dev={worst:.3e}")


def _verify_order(cfg: RunConfig, ck: _Checker, threads: int):
    target = Region(3, -9, 48, 48)
    probes = [Region(3, -9, 16, 16), Region(20, 10, 24, 12), Region(10, 0, 30, 30),
              Region(3, 20, 48, 19), Region(30, -9, 21, 40)]
    reference = None
    rng = random.Random(99)
    all_same = True
    for trial in range(10):
        order = probes[:]
        rng.shuffle(order)
        store = TileStore()
        state = _stage0_sampler(cfg, store, "verify.order")
        sched = state.plan_rounds(0, target)
        state.execute_rounds(sched, rng=rng, max_workers=max(threads, 1))
        for r in order:
            state.query(0, r)
        out = state.query(0, target)
        if reference is None:
            reference = out
        elif not np.array_equal(out, reference):
            all_same = False
    ck.check("order.bit-identical-10-permutations", all_same)


def _verify_cost(cfg: RunConfig, ck: _Checker, threads: int):
    st = _stage_from_dict(dict(cfg.stages[0]))
    layout = WindowLayout(st.window, st.stride)
    m = (2 * math.ceil(st.window / st.stride) - 1) ** 2
    bound = sum(m ** k for k in range(1, st.steps + 1))
    counts = set()
    for x, y in [(0, 0), (1003, -577), (-10 ** 6, 10 ** 6), (123456, 654321)]:
        store = TileStore()
        state = _stage0_sampler(cfg, store, "verify.cost")
        state.query(0, Region(x * layout.stride, y * layout.stride,
                              layout.window, layout.window))
        counts.add(state.total_denoiser_calls())
    measured = max(counts)
    ck.check("cost.within-bound", measured <= bound,
             f"measured={measured} bound={bound}")
    ck.check("cost.location-invariant", len(counts) == 1,
             f"counts={sorted(counts)}")


def _verify_transforms(cfg: RunConfig, ck: _Checker, threads: int):
    rng = np.random.default_rng(7)
    x = rng.normal(size=(2, 32, 32)).astype(np.float32)
    rt = transforms.signed_square(transforms.signed_sqrt(x))
    ck.check("transforms.signed-roundtrip",
             bool(np.allclose(rt, x, rtol=1e-6, atol=1e-7)),
             f"max_abs_dev={float(np.max(np.abs(rt - x))):.3e}")
    pair = transforms.laplacian_encode(x, factor=8)
    dec = transforms.laplacian_decode(pair)
    ck.check("transforms.frequency-split-exact", bool(np.array_equal(dec, x)))
    const = np.full((1, 8, 8), 42.0)
    u8 = transforms.normalize_heightmap_u8(const)
    ck.check("transforms.normalize-constant-128", bool(np.all(u8 == 128)))


_VERIFY_MODES = {"oracle": _verify_oracle, "order": _verify_order,
                 "cost": _verify_cost, "transforms": _verify_transforms}


def cmd_verify(args) -> int:
    try:
        cfg = load_config(args.config)
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    ck = _Checker()
    _VERIFY_MODES[args.mode](cfg, ck, args.threads)
    if ck.failures:
        print(f"FAILED: {', '.join(ck.failures)}", file=sys.stderr)
        return 1
    return 0


# ----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="infigrid",
        description="Seed-consistent lazy generation over unbounded 2-D lattices.")
    p.add_argument("--threads", type=int, default=os.cpu_count() or 1,
                   help="maximum worker threads for batched window evaluation")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a region and write it as a raster")
    g.add_argument("config", help="JSON configuration file")
    g.add_argument("region", help="region as x0,y0,WxH (signed origin)")
    g.add_argument("output", help="output raster path")
    g.set_defaults(func=cmd_gen)
    try:
        # let region specs with a negative origin ("-8,4,64x32") parse as
        # positionals instead of being mistaken for option flags
        g._negative_number_matcher = re.compile(r"^-\d+")
    except AttributeError:
        pass

    r = sub.add_parser("render", help="render a raster to binary PGM (P5)")
    r.add_argument("raster", help="input raster path")
    r.add_argument("output", help="output PGM path")
    r.add_argument("--signed-square", action="store_true",
                   help="apply sign(x)*x^2 before normalization")
    r.add_argument("--hillshade", action="store_true",
                   help="slope shading (Horn 3x3, azimuth 315, altitude 45)")
    r.set_defaults(func=cmd_render)

    b = sub.add_parser("bench", help="measure first/second region latency")
    b.add_argument("config", help="JSON configuration file")
    b.add_argument("--size", type=int, default=64, help="square region side")
    b.add_argument("--trials", type=int, default=5, help="random locations to time")
    b.set_defaults(func=cmd_bench)

    v = sub.add_parser("verify", help="run an invariant suite at desk scale")
    v.add_argument("config", help="JSON configuration file")
    v.add_argument("mode", choices=sorted(_VERIFY_MODES))
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        # argparse exits 2 on bad arguments already; normalize other codes
        return int(e.code or 0)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
