"""Exception types shared across the package."""


class GpetrackError(Exception):
    """Base class for all errors raised by this package."""


class InvalidArgument(GpetrackError, ValueError):
    """An argument violates a documented precondition."""


class NumericalFailure(GpetrackError, RuntimeError):
    """A factorization or solve failed even after jitter escalation."""


class DegenerateGeometry(GpetrackError, ValueError):
    """A measurement coincides with the object center."""


class DegenerateEstimate(GpetrackError, ValueError):
    """A contour has (numerically) zero area."""


class ParseError(GpetrackError, ValueError):
    """A file could not be parsed; carries the offending line number."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class ValidationError(GpetrackError, ValueError):
    """Parsed data violates a consistency rule (e.g. non-monotonic times)."""
