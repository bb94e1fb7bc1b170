"""Seed-consistent, coordinate-addressable Gaussian noise fields.

The field is a pure function of ``(seed, stream, x, y, channel)``: the
packed integer tuple is run through a 64-bit avalanche mixer (SplitMix64
finalizer constants), the result split into two 32-bit uniforms, and a
standard normal deviate produced with the Box-Muller transform.  The
construction is stateless, so any region can be evaluated in any order,
in pieces, or repeatedly, with bit-identical results.

Values are float32 at the storage boundary; intermediate math is 64-bit.
"""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from .grid import Region

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)

# Stream identifiers for the distinct noise uses in the package.  Two
# streams with different ids are statistically independent fields.
STREAM_BASE = 0          # initial noise field of the sampler recursion
STREAM_CONDITIONING = 101  # fill for masked-out conditioning entries
STREAM_CORRUPTION = 201  # user-map corruption (plus channel index)


class NoiseStream(NamedTuple):
    """A (seed, stream id) pair naming one independent noise field."""

    seed: int
    stream: int = STREAM_BASE


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def _as_u64(v) -> np.ndarray:
    return np.asarray(v, dtype=np.int64).astype(np.uint64)


def _hash_coords(stream: NoiseStream, xs, ys, channel: int) -> np.ndarray:
    h = np.uint64(stream.seed & 0xFFFFFFFFFFFFFFFF)
    for part in (np.uint64(stream.stream & 0xFFFFFFFF), _as_u64(xs), _as_u64(ys),
                 np.uint64(channel & 0xFFFFFFFF)):
        h = _mix64((h ^ part) + _GOLDEN)
    return h


def _normal_from_hash(h: np.ndarray) -> np.ndarray:
    h2 = _mix64(h + _GOLDEN)
    u1 = (h >> np.uint64(32)).astype(np.float64) * 2.0 ** -32
    u2 = (h2 >> np.uint64(32)).astype(np.float64) * 2.0 ** -32
    # u1 == 0 would make log blow up; remap to the smallest positive uniform
    u1 = np.maximum(u1, 2.0 ** -32)
    z = np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
    return z.astype(np.float32)


def noise_at(stream: NoiseStream, x: int, y: int, channel: int = 0) -> float:
    """Standard-normal deviate at a single lattice coordinate."""
    with np.errstate(over="ignore"):
        h = _hash_coords(stream, x, y, channel)
        return float(_normal_from_hash(np.asarray(h).reshape(1))[0])


def noise_region(stream: NoiseStream, r: Region, channels: int = 1) -> np.ndarray:
    """Dense ``(channels, height, width)`` float32 block of the noise field.

    Entry ``(c, py, px)`` equals ``noise_at(stream, r.x0+px, r.y0+py, c)``.
    """
    xs = np.arange(r.x0, r.x1, dtype=np.int64)[None, :]
    ys = np.arange(r.y0, r.y1, dtype=np.int64)[:, None]
    out = np.empty((channels, r.height, r.width), dtype=np.float32)
    with np.errstate(over="ignore"):
        for c in range(channels):
            h = _hash_coords(stream, xs, ys, c)
            out[c] = _normal_from_hash(h)
    return out
