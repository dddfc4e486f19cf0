"""Exception types shared across the library."""


class CapsrouteError(Exception):
    """Base class for every error raised by this package."""


class DimensionError(CapsrouteError, ValueError):
    """Array shapes or axes are incompatible with the requested operation."""


class ContractError(CapsrouteError, ValueError):
    """An API precondition was violated (non-scalar loss, malformed targets, ...)."""


class ConfigurationError(CapsrouteError, ValueError):
    """A configuration value is invalid or produces an impossible architecture."""


class UndefinedMetricError(CapsrouteError, ValueError):
    """The requested metric has no defined value on this input."""


class DataFormatError(CapsrouteError, ValueError):
    """A serialized dataset is malformed. Carries the byte offset of the problem."""

    def __init__(self, message: str, offset: int | None = None):
        if offset is not None:
            message = f"{message} (byte offset {offset})"
        super().__init__(message)
        self.offset = offset


class StratificationError(CapsrouteError, ValueError):
    """A stratified split would leave a non-empty subset without positives."""


class TrainingAborted(CapsrouteError, RuntimeError):
    """Optimization hit a non-recoverable state, e.g. a non-finite gradient."""
