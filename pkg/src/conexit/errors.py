"""Exception hierarchy shared by the library and the CLI."""


class ConexitError(Exception):
    """Base class for all library errors."""


class ValidationError(ConexitError, ValueError):
    """Bad parameters or configuration."""


class DomainError(ConexitError, ValueError):
    """Argument outside the finite domain of the Laplace exponent."""


class AssumptionError(ConexitError):
    """One of the standing assumptions (1, 2 or 3) does not hold."""

    def __init__(self, message, assumption=None):
        super().__init__(message)
        self.assumption = assumption


class NoRootError(AssumptionError):
    """phi(theta) stays below the target on the whole domain."""


class ConvergenceError(ConexitError, RuntimeError):
    """A numerical procedure failed to converge or to bracket a root."""


class TruncationWarning(UserWarning):
    """A truncated series was cut while its terms were still significant."""


class MonteCarloWarning(UserWarning):
    """Monte Carlo estimate is unreliable (heavy tails, coarse steps, ...)."""


class MultiplicityWarning(UserWarning):
    """An eigenvalue sits so close to the lambda_1 group cut that grouping is unreliable."""
