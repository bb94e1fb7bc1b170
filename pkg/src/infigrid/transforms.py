"""Elevation-domain encodings and normalizations.

Covers the signed square-root variance compressor, the low/high frequency
split with exact residuals, low-frequency re-extraction for stabilizing
noisy outputs, and the 8-bit normalization used for rendering heightmaps.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ShapeError


def signed_sqrt(x: np.ndarray) -> np.ndarray:
    """Elementwise sign(x) * sqrt(|x|)."""
    x = np.asarray(x)
    return np.sign(x) * np.sqrt(np.abs(x))


def signed_square(x: np.ndarray) -> np.ndarray:
    """Inverse of ``signed_sqrt``: sign(x) * x^2."""
    x = np.asarray(x)
    return np.sign(x) * x * x


def box_mean(x: np.ndarray, radius: int) -> np.ndarray:
    """Separable (2*radius+1)^2 box mean over the last two axes.

    Edges are handled by clamp-to-edge replication, which keeps constant
    inputs exactly constant.  radius 0 is the identity.
    """
    if radius < 0:
        raise ValueError("radius must be >= 0")
    if radius == 0:
        return x.copy()
    k = 2 * radius + 1
    for axis in (-2, -1):
        pad = [(0, 0)] * x.ndim
        pad[axis] = (radius, radius)
        xp = np.pad(x, pad, mode="edge")
        acc = np.zeros_like(x, dtype=x.dtype)
        for off in range(k):
            sl = [slice(None)] * x.ndim
            n = x.shape[axis]
            sl[axis] = slice(off, off + n)
            acc += xp[tuple(sl)]
        x = acc / k
    return x


def blur3_iterated(x: np.ndarray, radius: int) -> np.ndarray:
    """Iterated 3x3 box blur; ``radius`` is the iteration count."""
    for _ in range(radius):
        x = box_mean(x, 1)
    return x


def block_mean(x: np.ndarray, factor: int) -> np.ndarray:
    """Downsample by averaging factor x factor blocks over the last two axes."""
    h, w = x.shape[-2], x.shape[-1]
    if h % factor or w % factor:
        raise ShapeError(f"spatial dims {h}x{w} not divisible by factor {factor}")
    shape = x.shape[:-2] + (h // factor, factor, w // factor, factor)
    return x.reshape(shape).mean(axis=(-3, -1))


def upsample_nn(x: np.ndarray, factor: int) -> np.ndarray:
    """Nearest-neighbor upsampling by an integer factor on the last two axes."""
    return np.repeat(np.repeat(x, factor, axis=-2), factor, axis=-1)


@dataclass
class LaplacianPair:
    """Low-frequency tensor at 1/factor resolution plus a full-res residual.

    ``high`` is the exact residual ``x - upsample(low)``, so decoding
    always reconstructs the original tensor.
    """

    low: np.ndarray
    high: np.ndarray
    factor: int
    dtype: np.dtype


def laplacian_encode(x: np.ndarray, factor: int = 8, blur_radius: int = 1) -> LaplacianPair:
    """Split ``x`` into a blurred+downsampled low band and an exact residual."""
    x = np.asarray(x)
    x64 = x.astype(np.float64)
    low = block_mean(blur3_iterated(x64, blur_radius), factor)
    high = x64 - upsample_nn(low, factor)
    return LaplacianPair(low=low, high=high, factor=factor, dtype=x.dtype)


def laplacian_decode(pair: LaplacianPair) -> np.ndarray:
    """Reconstruct ``upsample(low) + high`` in the original dtype."""
    out = upsample_nn(pair.low, pair.factor) + pair.high
    return out.astype(pair.dtype)


def laplacian_stabilize(pair: LaplacianPair, blur_radius: int = 1) -> LaplacianPair:
    """Re-extract a denoised low band from a provisional decode.

    The provisional reconstruction is blurred and downsampled again to
    obtain a cleaned low-frequency component; the residual is passed
    through unchanged, so high-frequency detail is preserved while
    low-frequency noise is suppressed.
    """
    provisional = upsample_nn(pair.low, pair.factor) + pair.high
    low_hat = block_mean(blur3_iterated(provisional, blur_radius), pair.factor)
    return LaplacianPair(low=low_hat, high=pair.high, factor=pair.factor, dtype=pair.dtype)


def normalize_heightmap_u8(batch: np.ndarray) -> np.ndarray:
    """Map a batch of single-channel images to 3-channel uint8.

    Per image: center on (min+max)/2, scale by max(range, 255), shift to
    [0, 255], round half to even, clamp, and replicate to 3 channels.
    Adding a constant to an image does not change its output.
    """
    batch = np.asarray(batch, dtype=np.float64)
    if batch.ndim == 3:
        batch = batch[:, None]
    if batch.ndim != 4 or batch.shape[1] != 1:
        raise ShapeError(f"expected (B, 1, H, W) or (B, H, W), got {batch.shape}")
    mins = batch.min(axis=(-2, -1), keepdims=True)
    maxs = batch.max(axis=(-2, -1), keepdims=True)
    rng = np.maximum(maxs - mins, 255.0)
    mid = (mins + maxs) / 2.0
    norm = np.clip(((batch - mid) / rng + 0.5) * 255.0, 0.0, 255.0)
    out = np.rint(norm).astype(np.uint8)
    return np.repeat(out, 3, axis=1)
