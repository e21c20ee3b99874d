"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the range where an evaluation is trusted."""


class GridMismatch(ValueError):
    """Two sampled objects do not live on the same grid."""


class ConfigError(ValueError):
    """Malformed or inconsistent user configuration."""


class ConditionFailure(RuntimeError):
    """A structural condition could not be certified on the given data.

    The ``report`` attribute carries whatever evidence was gathered before
    giving up, so callers can serialize it.
    """

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report if report is not None else {}


class CGFailure(RuntimeError):
    """Conjugate gradient stagnated before reaching the requested residual."""

    def __init__(self, message, residuals=None):
        super().__init__(message)
        self.residuals = list(residuals) if residuals is not None else []
