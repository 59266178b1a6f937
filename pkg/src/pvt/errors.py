"""Exception types shared across the package."""


class ShapeError(ValueError):
    """Raised when tensor shapes or grid sizes are incompatible."""


class ConfigError(ValueError):
    """Raised when a model configuration violates its invariants."""


class NumericalError(ArithmeticError):
    """Raised on non-finite values, e.g. a diverging training run."""


class CheckpointError(IOError):
    """Base class for malformed checkpoint files."""

    code = "checkpoint"


class BadMagicError(CheckpointError):
    code = "bad_magic"


class VersionMismatchError(CheckpointError):
    code = "version_mismatch"


class TruncatedCheckpointError(CheckpointError):
    code = "truncated"


class ManifestError(CheckpointError):
    """Manifest entries overlap or point outside the payload."""

    code = "manifest"
