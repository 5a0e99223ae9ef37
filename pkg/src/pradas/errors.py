"""Exception types raised across the package."""


class PradasError(Exception):
    """Base class for all package-specific errors."""


class InvalidRatiosError(PradasError, ValueError):
    """Split ratios are not strictly increasing in (0, 1) or leave an empty half."""


class EmptyFirstHalfError(PradasError, ValueError):
    """A posterior update was requested on zero observations."""


class SingularDesignError(PradasError, ValueError):
    """Gram matrix numerically singular; carries the condition-number estimate."""

    def __init__(self, message: str, cond: float | None = None):
        super().__init__(message)
        self.cond = cond


class TooFewRowsError(PradasError, ValueError):
    """Not enough rows to fit the requested number of coefficients."""


class SeparationError(PradasError, RuntimeError):
    """Logistic MLE diverging (quasi-complete separation)."""


class ConvergenceError(PradasError, RuntimeError):
    """Iterative fit failed to reach tolerance within the iteration cap."""


class MismatchedScreensError(PradasError, ValueError):
    """Two split estimates do not cover the same screened feature set."""


class InvalidLevelError(PradasError, ValueError):
    """Nominal FDR level outside (0, 1)."""


class InvalidThresholdError(PradasError, ValueError):
    """Threshold argument outside its valid range."""


class TreeTooLargeError(PradasError, ValueError):
    """Stopping tree exceeds the exact backward-induction size cap."""


class InvalidSpecError(PradasError, ValueError):
    """Malformed generator specification."""


class CsvParseError(PradasError, ValueError):
    """CSV ingestion failure; message reports line and column."""


class MissingResponseError(PradasError, ValueError):
    """Requested response column absent from the CSV header."""


class EmptyAfterFilterError(PradasError, ValueError):
    """All rows or all feature columns were removed by preprocessing filters."""


class ConfigError(PradasError, ValueError):
    """Invalid experiment configuration document."""
