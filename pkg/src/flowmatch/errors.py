"""Exception taxonomy shared by every flowmatch module."""


class FlowMatchError(Exception):
    """Base class for all errors raised by this package."""


class DimensionError(FlowMatchError, ValueError):
    """Incompatible shapes, extents, or preconditions on array arguments."""


class NumericError(FlowMatchError, ArithmeticError):
    """A kernel produced (or was handed) non-finite values."""


class FormatError(FlowMatchError, ValueError):
    """A binary container violates its declared layout.

    ``offset`` is the byte position at which the violation was detected,
    when known.
    """

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class ConfigError(FlowMatchError, ValueError):
    """Invalid configuration value, or weights inconsistent with config."""


class ResourceLimitError(FlowMatchError, RuntimeError):
    """A requested computation exceeds a configured resource cap."""


class UndefinedLossError(FlowMatchError, ValueError):
    """Loss requested over an empty set of valid pixels."""


class UndefinedMetricError(FlowMatchError, ValueError):
    """Metric requested over an empty set of valid pixels."""
