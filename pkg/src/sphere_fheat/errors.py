"""Exception hierarchy shared by the library and the experiment runner."""


class SphereFheatError(Exception):
    """Base class for all toolkit errors."""


class DomainError(SphereFheatError, ValueError):
    """An argument lies outside the domain of a function."""


class PreconditionError(SphereFheatError):
    """An operation was requested outside the regime where it is defined."""


class QuadratureError(SphereFheatError, ArithmeticError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message, achieved=None, requested=None):
        super().__init__(message)
        self.achieved = achieved
        self.requested = requested


class FactorizationError(SphereFheatError, ArithmeticError):
    """A covariance matrix could not be factorized within the jitter budget."""

    def __init__(self, message, min_eigenvalue=None):
        super().__init__(message)
        self.min_eigenvalue = min_eigenvalue


class SymmetryError(SphereFheatError, ArithmeticError):
    """Assembled field values carry an imaginary residue above threshold."""


class ConfigError(SphereFheatError):
    """An experiment configuration is malformed."""
