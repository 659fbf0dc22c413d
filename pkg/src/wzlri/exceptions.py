"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Invalid or non-commensurate parameters (grid spacings, bandwidths, flags)."""


class StepFailure(RuntimeError):
    """A single time step could not be completed (e.g. fixed-point non-convergence)."""

    def __init__(self, message, step=None, residual=None):
        super().__init__(message)
        self.step = step
        self.residual = residual


class DivergenceError(RuntimeError):
    """A trajectory produced non-finite values."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step


class InsufficientDataError(ValueError):
    """Too few valid rows to fit a convergence slope."""
