"""Lazily evaluated unbounded tensors with tile-based caching.

A tensor is defined by a generator: a pure function from a window index
(plus parent data for dependent tensors) to a window-sized contribution.
The value of a pixel is the float sum of the contributions of every
window overlapping it, accumulated in canonical (j, i) window order.
Because per-pixel sums always run in that fixed order, any read is
bit-identical to the same read on a fresh store, in any query order, and
under either caching strategy.

Two caching strategies are provided:

* ``direct``   memoizes window contributions in an LRU cache with an
               optional byte budget; evicted windows are recomputed
               transparently (generators are pure).
* ``indirect`` finalizes pixel values into fixed-size storage tiles the
               first time a read covers them; tiles can be persisted to
               a backing file and reloaded bit-exactly.
"""

from __future__ import annotations

import json
import os
import struct
import threading
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import GeneratorError, StoreError, StoreFormatError
from .grid import Region, WindowIndex, WindowLayout, window_region, windows_overlapping

MAGIC = b"ITNSTORE"
FORMAT_VERSION = 1
_DTYPE_TAGS = {1: np.dtype(np.float32), 2: np.dtype(np.float64)}
_TAG_FOR_DTYPE = {v: k for k, v in _DTYPE_TAGS.items()}

#: Marks an axis with no bound in ``TensorSpec.extent``.
UNBOUNDED = None


@dataclass(frozen=True)
class Dependency:
    """Parent tensor reference: per-window halo margin and lattice scale.

    The parent region supplied for a window is the window's region mapped
    onto the parent lattice and expanded by ``margin`` parent pixels on
    all sides.  ``scale`` > 1 means the parent lattice is coarser (the
    region is divided and rounded outward); ``inv_scale`` > 1 means the
    parent is finer (the region is multiplied).
    """

    handle: str
    margin: int = 0
    scale: int = 1
    inv_scale: int = 1


@dataclass(frozen=True)
class TensorSpec:
    name: str
    channels: int
    layout: WindowLayout
    cache_method: str = "direct"
    cache_limit: int | None = None
    extent: tuple[int | None, int | None] = (UNBOUNDED, UNBOUNDED)  # (width, height)
    dependencies: tuple[Dependency, ...] = ()
    dtype: type = np.float32
    weighted: bool = False  # last channel accumulates blending weights

    def window_nbytes(self) -> int:
        return self.channels * self.layout.window ** 2 * np.dtype(self.dtype).itemsize


class _Tensor:
    def __init__(self, spec: TensorSpec, gen):
        self.spec = spec
        self.gen = gen
        # direct cache
        self.lru: OrderedDict[WindowIndex, np.ndarray] = OrderedDict()
        self.cached_bytes = 0
        self.peak_cached_bytes = 0
        # indirect cache: finalized pixel values per tile + finalized masks
        self.tiles: dict[tuple[int, int], np.ndarray] = {}
        self.tile_masks: dict[tuple[int, int], np.ndarray] = {}
        self.processed: set[WindowIndex] = set()
        self.generator_calls = 0


def _parent_request(dep: Dependency, win: Region) -> Region:
    if dep.inv_scale > 1:
        s = dep.inv_scale
        win = Region(win.x0 * s, win.y0 * s, win.width * s, win.height * s)
    else:
        win = win.scale_down(dep.scale)
    return win.expand(dep.margin)


class TileStore:
    """Central registry of lazily evaluated tensors.

    May be shared across threads; operations are serialized internally,
    so results are always bit-identical to single-threaded execution.
    """

    def __init__(self, tile_size: int = 256, path: str | None = None):
        if tile_size < 1 or tile_size & (tile_size - 1):
            raise StoreError(f"tile size must be a power of two, got {tile_size}")
        self.tile_size = tile_size
        self.path = path
        self._tensors: dict[str, _Tensor] = {}
        self._pending: dict[str, dict] = {}  # persisted state awaiting re-registration
        self._lock = threading.RLock()
        self._log_path = os.environ.get("ITSTORE_TILE_LOG")

    # ------------------------------------------------------------------
    # registration

    def create_tensor(self, spec: TensorSpec, gen) -> str:
        """Register a tensor; no computation happens until the first read."""
        with self._lock:
            if spec.name in self._tensors:
                existing = self._tensors[spec.name].spec
                if existing == spec:
                    return spec.name  # idempotent re-registration (reopened stores)
                raise StoreError(f"tensor {spec.name!r} already registered with a different spec")
            if spec.cache_method not in ("direct", "indirect"):
                raise StoreError(f"unknown cache method {spec.cache_method!r}")
            for dep in spec.dependencies:
                if dep.handle == spec.name:
                    raise StoreError(f"tensor {spec.name!r} cannot depend on itself")
                if dep.handle not in self._tensors:
                    raise StoreError(f"dependency {dep.handle!r} is not registered")
            if spec.cache_limit is not None and spec.cache_limit < spec.window_nbytes():
                raise StoreError(
                    f"cache_limit {spec.cache_limit} below one window footprint "
                    f"({spec.window_nbytes()} bytes)")
            if spec.cache_limit is not None and spec.cache_method != "direct":
                raise StoreError("cache_limit applies to direct caching only")
            t = _Tensor(spec, gen)
            self._attach_pending(t)
            self._tensors[spec.name] = t
            return spec.name

    def _attach_pending(self, t: _Tensor):
        state = self._pending.pop(t.spec.name, None)
        if state is None:
            return
        if t.spec.cache_method != "indirect":
            raise StoreFormatError(
                f"persisted tensor {t.spec.name!r} re-registered with direct caching")
        if state["channels"] != t.spec.channels:
            raise StoreFormatError(
                f"persisted tensor {t.spec.name!r} has {state['channels']} channels, "
                f"spec declares {t.spec.channels}")
        if state["dtype"] != np.dtype(t.spec.dtype):
            raise StoreFormatError(f"persisted tensor {t.spec.name!r} dtype mismatch")
        t.tiles = state["tiles"]
        t.tile_masks = state["masks"]
        t.processed = state["processed"]

    def _tensor(self, handle: str) -> _Tensor:
        try:
            return self._tensors[handle]
        except KeyError:
            raise StoreError(f"unknown tensor handle {handle!r}") from None

    def spec_of(self, handle: str) -> TensorSpec:
        return self._tensor(handle).spec

    def generator_calls(self, handle: str) -> int:
        return self._tensor(handle).generator_calls

    def total_generator_calls(self) -> int:
        with self._lock:
            return sum(t.generator_calls for t in self._tensors.values())

    def tensor_names(self) -> list[str]:
        with self._lock:
            return sorted(self._tensors)

    def is_materialized(self, handle: str, idx: WindowIndex) -> bool:
        """Whether a window's contribution would be served without generation."""
        with self._lock:
            t = self._tensor(handle)
            if t.spec.cache_method == "direct":
                return idx in t.lru
            win = window_region(t.spec.layout, idx)
            return bool(self._finalized_mask(t, win).all())

    def cached_contribution(self, handle: str, idx: WindowIndex) -> np.ndarray | None:
        """Direct-cache introspection: the stored window contribution, if any."""
        with self._lock:
            t = self._tensor(handle)
            arr = t.lru.get(idx)
            return None if arr is None else arr.copy()

    def processed_set(self, handle: str) -> set[WindowIndex]:
        with self._lock:
            return set(self._tensor(handle).processed)

    def peak_cached_bytes(self, handle: str) -> int:
        return self._tensor(handle).peak_cached_bytes

    def cached_bytes(self, handle: str) -> int:
        return self._tensor(handle).cached_bytes

    # ------------------------------------------------------------------
    # reads

    def read(self, handle: str, r: Region) -> np.ndarray:
        """Assemble the accumulated (C, H, W) block for ``r``.

        Generates any windows not yet materialized, resolving parent
        regions recursively.  Bit-identical to a fresh store evaluated in
        any query order.
        """
        with self._lock:
            t = self._tensor(handle)
            self._check_bounds(t, r)
            if t.spec.cache_method == "direct":
                return self._read_direct(t, r)
            return self._read_indirect(t, r)

    def read_values(self, handle: str, r: Region) -> np.ndarray:
        """Like ``read`` but divides out the weight channel if present."""
        raw = self.read(handle, r)
        if not self._tensor(handle).spec.weighted:
            return raw
        return divide_weighted(raw)

    def _check_bounds(self, t: _Tensor, r: Region):
        w, h = t.spec.extent
        if w is not UNBOUNDED and not (0 <= r.x0 and r.x1 <= w):
            raise StoreError(f"region {r} outside finite x extent [0, {w})")
        if h is not UNBOUNDED and not (0 <= r.y0 and r.y1 <= h):
            raise StoreError(f"region {r} outside finite y extent [0, {h})")

    # -- generation ----------------------------------------------------

    def _log_window(self, t: _Tensor, idx: WindowIndex, nbytes: int):
        if self._log_path:
            with open(self._log_path, "a", encoding="utf-8") as f:
                f.write(f"{t.spec.name} {idx[0]} {idx[1]} {nbytes}\n")

    def _fetch_parents(self, t: _Tensor, idxs) -> list[tuple[np.ndarray, Region]]:
        """One batched read per dependency covering every pending window."""
        slabs = []
        for dep in t.spec.dependencies:
            req = None
            for idx in idxs:
                pr = _parent_request(dep, window_region(t.spec.layout, idx))
                req = pr if req is None else req.bounding_union(pr)
            slabs.append((self.read_values(dep.handle, req), req))
        return slabs

    def _generate(self, t: _Tensor, idx: WindowIndex,
                  slabs: list[tuple[np.ndarray, Region]] | None) -> np.ndarray:
        win = window_region(t.spec.layout, idx)
        parents = []
        for d, dep in enumerate(t.spec.dependencies):
            need = _parent_request(dep, win)
            slab = None
            if slabs is not None and slabs[d][1].contains(need):
                data, reg = slabs[d]
                sx = need.x0 - reg.x0
                sy = need.y0 - reg.y0
                slab = data[:, sy:sy + need.height, sx:sx + need.width]
            if slab is None:
                # window cached earlier and evicted mid-read: fetch directly
                slab = self.read_values(dep.handle, need)
            parents.append((slab, need))
        try:
            out = t.gen(idx, parents, {"store": self, "name": t.spec.name})
        except Exception as e:  # noqa: BLE001 - context is attached and re-raised
            raise GeneratorError(t.spec.name, idx, e) from e
        out = np.asarray(out, dtype=t.spec.dtype)
        expect = (t.spec.channels, t.spec.layout.window, t.spec.layout.window)
        if out.shape != expect:
            raise GeneratorError(
                t.spec.name, idx,
                ValueError(f"generator returned shape {out.shape}, expected {expect}"))
        t.generator_calls += 1
        self._log_window(t, idx, out.nbytes)
        return out

    def ensure_window(self, handle: str, idx: WindowIndex):
        """Materialize a single window's contribution into the cache.

        Used by round-based schedulers to force evaluation order; a no-op
        if the window is already cached or finalized.
        """
        with self._lock:
            t = self._tensor(handle)
            if t.spec.cache_method == "direct":
                if idx not in t.lru:
                    contrib = self._generate(t, idx, None)
                    self._put_direct(t, idx, contrib)
                    t.processed.add(idx)
            else:
                # indirect finalization happens per read; force it by
                # reading the window's own region
                self.read(handle, window_region(t.spec.layout, idx))

    # -- direct caching ------------------------------------------------

    def _put_direct(self, t: _Tensor, idx: WindowIndex, contrib: np.ndarray):
        limit = t.spec.cache_limit
        if limit is not None:
            while t.lru and t.cached_bytes + contrib.nbytes > limit:
                self._evict_one(t)
        t.lru[idx] = contrib
        t.cached_bytes += contrib.nbytes
        t.peak_cached_bytes = max(t.peak_cached_bytes, t.cached_bytes)

    def _evict_one(self, t: _Tensor) -> int:
        idx, arr = t.lru.popitem(last=False)
        t.cached_bytes -= arr.nbytes
        t.processed.discard(idx)  # drop together so re-reads recompute atomically
        return arr.nbytes

    def evict_to_limit(self, handle: str) -> int:
        """Drop least-recently-used window outputs until under budget."""
        with self._lock:
            t = self._tensor(handle)
            if t.spec.cache_method != "direct":
                raise StoreError("evict_to_limit applies to direct caching only")
            limit = t.spec.cache_limit
            freed = 0
            if limit is None:
                return 0
            while t.lru and t.cached_bytes > limit:
                freed += self._evict_one(t)
            return freed

    def _read_direct(self, t: _Tensor, r: Region) -> np.ndarray:
        idxs = windows_overlapping(t.spec.layout, r)
        missing = [i for i in idxs if i not in t.lru]
        slabs = None
        if missing and t.spec.dependencies:
            slabs = self._fetch_parents(t, missing)
        out = np.zeros((t.spec.channels, r.height, r.width), dtype=t.spec.dtype)
        for idx in idxs:
            contrib = t.lru.get(idx)
            if contrib is None:
                contrib = self._generate(t, idx, slabs)
                self._put_direct(t, idx, contrib)
                t.processed.add(idx)
            else:
                t.lru.move_to_end(idx)
            self._accumulate(out, r, t.spec.layout, idx, contrib)
        return out

    # -- indirect caching ----------------------------------------------

    def _tile_range(self, r: Region):
        ts = self.tile_size
        for ty in range(r.y0 // ts, (r.y1 - 1) // ts + 1):
            for tx in range(r.x0 // ts, (r.x1 - 1) // ts + 1):
                yield tx, ty, Region(tx * ts, ty * ts, ts, ts)

    def _finalized_mask(self, t: _Tensor, r: Region) -> np.ndarray:
        fin = np.zeros((r.height, r.width), dtype=bool)
        for tx, ty, treg in self._tile_range(r):
            m = t.tile_masks.get((tx, ty))
            if m is None:
                continue
            ov = treg.intersection(r)
            fin[ov.y0 - r.y0:ov.y1 - r.y0, ov.x0 - r.x0:ov.x1 - r.x0] = \
                m[ov.y0 - treg.y0:ov.y1 - treg.y0, ov.x0 - treg.x0:ov.x1 - treg.x0]
        return fin

    def _gather_tiles(self, t: _Tensor, r: Region, out: np.ndarray, where: np.ndarray):
        for tx, ty, treg in self._tile_range(r):
            data = t.tiles.get((tx, ty))
            if data is None:
                continue
            ov = treg.intersection(r)
            dst = (slice(None), slice(ov.y0 - r.y0, ov.y1 - r.y0),
                   slice(ov.x0 - r.x0, ov.x1 - r.x0))
            src = (slice(None), slice(ov.y0 - treg.y0, ov.y1 - treg.y0),
                   slice(ov.x0 - treg.x0, ov.x1 - treg.x0))
            sel = where[dst[1], dst[2]]
            out[dst][:, sel] = data[src][:, sel]

    def _commit_region(self, t: _Tensor, r: Region, values: np.ndarray):
        ts = self.tile_size
        for tx, ty, treg in self._tile_range(r):
            if (tx, ty) not in t.tiles:
                t.tiles[(tx, ty)] = np.zeros((t.spec.channels, ts, ts), dtype=t.spec.dtype)
                t.tile_masks[(tx, ty)] = np.zeros((ts, ts), dtype=bool)
            ov = treg.intersection(r)
            dst = (slice(None), slice(ov.y0 - treg.y0, ov.y1 - treg.y0),
                   slice(ov.x0 - treg.x0, ov.x1 - treg.x0))
            src = (slice(None), slice(ov.y0 - r.y0, ov.y1 - r.y0),
                   slice(ov.x0 - r.x0, ov.x1 - r.x0))
            t.tiles[(tx, ty)][dst] = values[src]
            t.tile_masks[(tx, ty)][dst[1], dst[2]] = True

    def _read_indirect(self, t: _Tensor, r: Region) -> np.ndarray:
        fin = self._finalized_mask(t, r)
        out = np.zeros((t.spec.channels, r.height, r.width), dtype=t.spec.dtype)
        if fin.all():
            self._gather_tiles(t, r, out, fin)
            return out
        idxs = windows_overlapping(t.spec.layout, r)
        # only windows touching a not-yet-finalized pixel need (re)generation
        needed = []
        for idx in idxs:
            ov = window_region(t.spec.layout, idx).intersection(r)
            sub = fin[ov.y0 - r.y0:ov.y1 - r.y0, ov.x0 - r.x0:ov.x1 - r.x0]
            if not sub.all():
                needed.append(idx)
        slabs = self._fetch_parents(t, needed) if t.spec.dependencies else None
        for idx in needed:  # canonical order: needed preserves window-index order
            contrib = self._generate(t, idx, slabs)
            self._accumulate(out, r, t.spec.layout, idx, contrib)
            t.processed.add(idx)
        # finalized pixels keep their committed values
        if fin.any():
            self._gather_tiles(t, r, out, fin)
        self._commit_region(t, r, out)
        t.processed.update(idxs)
        return out

    @staticmethod
    def _accumulate(out: np.ndarray, r: Region, layout: WindowLayout,
                    idx: WindowIndex, contrib: np.ndarray):
        win = window_region(layout, idx)
        ov = win.intersection(r)
        if ov is None:
            return
        out[:, ov.y0 - r.y0:ov.y1 - r.y0, ov.x0 - r.x0:ov.x1 - r.x0] += \
            contrib[:, ov.y0 - win.y0:ov.y1 - win.y0, ov.x0 - win.x0:ov.x1 - win.x0]

    # ------------------------------------------------------------------
    # persistence

    def flush(self):
        """Durably write all indirect tensors' tiles and processed sets.

        The file is rewritten atomically (temp file + rename), so a crash
        mid-flush can never persist a half-applied state.
        """
        if self.path is None:
            raise StoreError("store has no backing file path")
        with self._lock:
            tmp = self.path + ".tmp"
            with open(tmp, "wb") as f:
                f.write(_pack_header(np.dtype(np.float32), self.tile_size, 0, (0, 0)))
                meta = {"tensors": {}}
                order = []
                for name in sorted(self._tensors):
                    t = self._tensors[name]
                    if t.spec.cache_method != "indirect":
                        continue
                    coords = sorted(t.tiles)
                    meta["tensors"][name] = {
                        "channels": t.spec.channels,
                        "dtype": _TAG_FOR_DTYPE[np.dtype(t.spec.dtype)],
                        "processed": sorted([list(i) for i in t.processed]),
                        "tiles": [list(c) for c in coords],
                    }
                    order.append((t, coords))
                blob = json.dumps(meta, sort_keys=True).encode("utf-8")
                f.write(struct.pack("<I", len(blob)))
                f.write(blob)
                for t, coords in order:
                    for (tx, ty) in coords:
                        f.write(_pack_header(np.dtype(t.spec.dtype), self.tile_size,
                                             t.spec.channels, (tx, ty)))
                        f.write(np.ascontiguousarray(t.tiles[(tx, ty)]).tobytes())
                        f.write(np.packbits(t.tile_masks[(tx, ty)]).tobytes())
                f.flush()
                os.fsync(f.fileno())
            os.replace(tmp, self.path)


def _pack_header(dtype: np.dtype, tile_size: int, channels: int,
                 coords: tuple[int, int]) -> bytes:
    # 32 bytes: magic(8) version(u16) dtype(u16) tile(u32) channels(u32)
    # tile coords as two i32, then 4 pad bytes
    tag = _TAG_FOR_DTYPE[dtype]
    return struct.pack("<8sHHIIii4x", MAGIC, FORMAT_VERSION, tag, tile_size,
                       channels, coords[0], coords[1])


def _unpack_header(raw: bytes):
    if len(raw) != 32:
        raise StoreFormatError("truncated header")
    magic, version, tag, tile, channels, tx, ty = struct.unpack("<8sHHIIii4x", raw)
    if magic != MAGIC:
        raise StoreFormatError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise StoreFormatError(f"unsupported format version {version}")
    return tag, tile, channels, (tx, ty)


def open_store(path: str, tile_size: int | None = None) -> TileStore:
    """Reopen a persisted store; reads are bit-identical to the original.

    Tensors must be re-registered (generators are code, not data); the
    persisted tiles, finalized masks, and processed sets attach to them
    by name, with header validation against the declared spec.
    """
    with open(path, "rb") as f:
        tag, file_tile, channels, _ = _unpack_header(f.read(32))
        if channels != 0:
            raise StoreFormatError("file header corrupt: nonzero channel count")
        if tile_size is not None and tile_size != file_tile:
            raise StoreFormatError(
                f"declared tile size {tile_size} != persisted {file_tile}")
        (blob_len,) = struct.unpack("<I", f.read(4))
        try:
            meta = json.loads(f.read(blob_len).decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as e:
            raise StoreFormatError(f"corrupt metadata block: {e}") from e
        store = TileStore(tile_size=file_tile, path=path)
        ts = file_tile
        for name in sorted(meta.get("tensors", {})):
            entry = meta["tensors"][name]
            dtype = _DTYPE_TAGS.get(entry["dtype"])
            if dtype is None:
                raise StoreFormatError(f"unknown dtype tag {entry['dtype']}")
            tiles, masks = {}, {}
            for _coord in entry["tiles"]:
                tag_i, tile_i, chan_i, coords = _unpack_header(f.read(32))
                if tile_i != ts or chan_i != entry["channels"] or \
                        _DTYPE_TAGS.get(tag_i) != dtype:
                    raise StoreFormatError(f"tile header mismatch in tensor {name!r}")
                n = chan_i * ts * ts * dtype.itemsize
                data = np.frombuffer(f.read(n), dtype=dtype).reshape(chan_i, ts, ts).copy()
                mbytes = f.read((ts * ts + 7) // 8)
                mask = np.unpackbits(np.frombuffer(mbytes, dtype=np.uint8))
                tiles[tuple(coords)] = data
                masks[tuple(coords)] = mask[:ts * ts].reshape(ts, ts).astype(bool)
            store._pending[name] = {
                "channels": entry["channels"],
                "dtype": dtype,
                "tiles": tiles,
                "masks": masks,
                "processed": {tuple(p) for p in entry["processed"]},
            }
        return store


def divide_weighted(raw: np.ndarray) -> np.ndarray:
    """Split off the trailing weight channel and divide; 0/0 is defined as 0."""
    data, weights = raw[:-1], raw[-1]
    out = np.zeros_like(data)
    np.divide(data, weights[None], out=out, where=weights[None] > 0)
    return out
