"""Exception types shared across the package."""


class InfigridError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(InfigridError):
    """Invalid run configuration (bad schema, unknown keys, bad values)."""


class ShapeError(InfigridError):
    """Tensor shape does not match what an operation requires."""


class CoverageError(InfigridError):
    """Supplied parent data does not cover a required region."""

    def __init__(self, message, missing=None):
        super().__init__(message)
        self.missing = missing


class StoreError(InfigridError):
    """Generic tile-store failure."""


class StoreFormatError(StoreError):
    """Persistent store file is corrupt or does not match expectations."""


class GeneratorError(StoreError):
    """A tensor generator raised; carries the tensor name and window index."""

    def __init__(self, tensor, index, cause):
        super().__init__(f"generator for tensor {tensor!r} failed at window {index}: {cause}")
        self.tensor = tensor
        self.index = index
        self.cause = cause
