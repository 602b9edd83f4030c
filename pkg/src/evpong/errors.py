"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: ConfigError -> 2, DataError -> 3.
"""


class EvpongError(Exception):
    """Base class for all package errors."""


class ConfigError(EvpongError):
    """Invalid or inconsistent configuration."""


class DataError(EvpongError):
    """Malformed or physically impossible input data."""


class EventFormatError(DataError):
    """Event file could not be parsed; carries the offending line number."""

    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class OrderingError(DataError):
    """Timestamps regressed in a stream that must be time-ordered."""


class DegenerateGeometryError(DataError):
    """Geometric construction has no well-conditioned solution."""


class NoInterceptError(DataError):
    """Trajectory never reaches the requested plane."""


class InsufficientDataError(DataError):
    """Fewer observations than the operation requires."""


class DivergedTrainingError(EvpongError):
    """A training update produced non-finite values."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
