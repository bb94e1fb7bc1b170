"""Seed-consistent lazy generation over unbounded 2-D lattices.

The core pieces: an infinite tile store with memoized window generators
(``store``), a window-fusion sampling engine on top of it (``sampler``),
a hierarchical coarse-to-fine pipeline (``pipeline``), deterministic
reference denoisers (``denoise``), coordinate-hashed Gaussian noise
(``noise``), and elevation transforms (``transforms``).
"""

from .denoise import Conditioning, DenoiserSpec, coarse_patch_features
from .errors import (ConfigError, CoverageError, GeneratorError, InfigridError,
                     ShapeError, StoreError, StoreFormatError)
from .grid import (Region, WindowLayout, linear_weight_window, window_region,
                   windows_overlapping)
from .noise import NoiseStream, noise_at, noise_region
from .pipeline import (PipelineConfig, ProceduralMap, RasterMap, StageConfig,
                       build_pipeline, corrupt_user_map, load_raster, save_raster)
from .sampler import (ConditioningSource, SamplerConfig, SamplerState, sample)
from .store import (Dependency, TensorSpec, TileStore, UNBOUNDED, divide_weighted,
                    open_store)
from .transforms import (LaplacianPair, laplacian_decode, laplacian_encode,
                         laplacian_stabilize, normalize_heightmap_u8,
                         signed_sqrt, signed_square)

__version__ = "0.1.0"

__all__ = [
    "Conditioning", "ConditioningSource", "ConfigError", "CoverageError",
    "Dependency", "DenoiserSpec", "GeneratorError", "InfigridError",
    "LaplacianPair", "NoiseStream", "PipelineConfig", "ProceduralMap",
    "RasterMap", "Region", "SamplerConfig", "SamplerState", "ShapeError",
    "StageConfig", "StoreError", "StoreFormatError", "TensorSpec", "TileStore",
    "UNBOUNDED", "WindowLayout", "build_pipeline", "coarse_patch_features",
    "corrupt_user_map", "divide_weighted", "laplacian_decode",
    "laplacian_encode", "laplacian_stabilize", "linear_weight_window",
    "load_raster", "noise_at", "noise_region", "normalize_heightmap_u8",
    "open_store", "sample", "save_raster", "signed_sqrt", "signed_square",
    "window_region", "windows_overlapping",
]
