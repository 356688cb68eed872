"""Exception types shared across the package."""


class CoagError(Exception):
    """Base class for all package errors."""


class DivisionByExhaustion(CoagError, ZeroDivisionError):
    """The interaction mass (or m_1^2) fell below the exhaustion threshold."""


class InvalidInitialDistribution(CoagError, ValueError):
    pass


class Exhausted(CoagError):
    """No permissible reactant pair remains in a finite particle system."""


class DomainError(CoagError, ValueError):
    """Evaluation requested outside the pre-exhaustion window (m_1 <= 0)."""


class QuadratureFailure(CoagError, ArithmeticError):
    pass


class GelationReached(CoagError, ArithmeticError):
    """The second moment blew up while integrating the moment hierarchy."""

    def __init__(self, message, t=None):
        super().__init__(message)
        self.t = t
