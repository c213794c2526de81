class FinReportError(Exception):
    """Base class for all package errors."""


class ParseError(FinReportError, ValueError):
    """Malformed input file. Carries the 1-based line number when known."""

    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class ValidationError(FinReportError, ValueError):
    """A record or config violates a documented invariant."""


class DimensionError(FinReportError, ValueError):
    pass


class NumericalError(FinReportError, ArithmeticError):
    """Non-finite or exploding values during a computation."""


class RankDeficientError(FinReportError, ArithmeticError):
    """Design matrix is singular; ``columns`` names the collinear regressors."""

    def __init__(self, message: str, columns: list[str] | None = None):
        self.columns = list(columns or [])
        super().__init__(message)


class ConfigMismatchError(FinReportError):
    """Artifacts produced under different configs were mixed."""
