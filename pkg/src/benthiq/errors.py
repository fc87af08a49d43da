"""Exception types shared across the package."""


class BenthiqError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(BenthiqError, ValueError):
    """Shapes or extents do not satisfy an operation's contract."""


class ConfigError(BenthiqError, ValueError):
    """A configuration value is missing, malformed, or inconsistent."""


class ContractError(BenthiqError, RuntimeError):
    """A runtime precondition was violated (non-scalar loss, missing grad, ...)."""


class RasterError(BenthiqError, ValueError):
    """A raster file failed to parse or validate."""


class CheckpointError(BenthiqError, ValueError):
    """A checkpoint file failed to load (version, truncation, name mismatch)."""


class EmptyRegionError(BenthiqError, ValueError):
    """A metric was requested over an empty pixel region."""


class TrainingAborted(BenthiqError, RuntimeError):
    """Training stopped on a non-recoverable numerical failure."""
