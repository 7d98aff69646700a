"""Exception types shared across the package."""


class VganError(Exception):
    """Base class for all package errors."""


class DimensionError(VganError, ValueError):
    """Shapes or extents do not agree with what an operation requires."""


class ValidityError(VganError, FloatingPointError):
    """A tensor holds NaN or Inf values."""


class DegenerateError(VganError, ValueError):
    """Statistics are undefined (too few samples, zero variance, low rank)."""


class GraphError(VganError, RuntimeError):
    """Misuse of the computation graph, e.g. a second backward pass."""


class FormatError(VganError, ValueError):
    """A file does not follow the expected binary or text layout."""


class DivergenceError(VganError, FloatingPointError):
    """Training produced a non-finite loss."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report
