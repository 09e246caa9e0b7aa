"""Exception types raised across the package."""


class SPPNetError(Exception):
    """Base class for all package-specific errors."""


class ConfigError(SPPNetError, ValueError):
    """Invalid or inconsistent configuration."""


class ShapeError(SPPNetError, ValueError):
    """Tensor shape or size does not match the expected contract."""


class SamplingError(SPPNetError, ValueError):
    """Point sampling cannot proceed (no foreground, bad instance id, ...)."""


class DataError(SPPNetError, ValueError):
    """Dataset loading or pairing problem."""


class CheckpointError(SPPNetError, ValueError):
    """Malformed or incompatible checkpoint file."""


class ProfileError(SPPNetError, ValueError):
    """FLOPs accounting hit a layer type it does not know."""


class DivergenceError(SPPNetError, RuntimeError):
    """Training produced a non-finite loss."""
