"""Exception types shared across the solver stack."""


class ConfigError(ValueError):
    """A configuration value violates its contract."""


class ModelEvaluationError(RuntimeError):
    """The reflection model produced a non-finite value."""


class PassivityViolation(RuntimeError):
    """A reflection amplitude left the allowed range."""

    def __init__(self, message, theta=None, frequency_hz=None):
        super().__init__(message)
        self.theta = theta
        self.frequency_hz = frequency_hz


class ValidationError(ValueError):
    """A candidate solution violates feasibility constraints."""


class NumericalError(RuntimeError):
    """An iterative routine failed to converge within its budget."""


class InternalConsistencyError(RuntimeError):
    """A guaranteed monotonicity or identity was violated at runtime."""


class StalledLineSearchError(NumericalError):
    """No damping exponent satisfied the residual decrease condition."""
