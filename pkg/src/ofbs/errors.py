"""Exception types shared across the package.

The CLI maps these onto its documented exit codes: configuration and
domain problems exit with 2, numerical failures with 3.
"""


class ConfigError(ValueError):
    """Invalid configuration file or inconsistent run parameters."""


class DomainError(ValueError):
    """Argument outside the mathematical domain of an operation."""


class NumericError(RuntimeError):
    """A numerical routine failed to converge or produced an invalid result."""


class QuadratureError(NumericError):
    """Quadrature did not reach the requested tolerance under max refinement."""

    def __init__(self, message, estimate=None, error_bound=None):
        super().__init__(message)
        self.estimate = estimate
        self.error_bound = error_bound
