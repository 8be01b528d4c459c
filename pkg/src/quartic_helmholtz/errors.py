"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class QuarticHelmholtzError(Exception):
    """Base class for every error raised by the package."""


class ParamsOutsideA1(QuarticHelmholtzError, ValueError):
    """(alpha, beta, N) match none of the oscillatory parameter cases."""


class ExponentOutOfRange(QuarticHelmholtzError, ValueError):
    """An exponent lies outside the admissible range of an operation."""


class DomainError(QuarticHelmholtzError, ValueError):
    """Argument outside the domain of a special function."""


class UnsupportedCase(QuarticHelmholtzError, ValueError):
    """Combination of inputs that has no defined kernel (e.g. a = 0 in N = 2)."""


class GridTooCoarse(QuarticHelmholtzError, ValueError):
    """The grid cannot resolve the requested object."""


class TagMismatch(QuarticHelmholtzError, ValueError):
    """A field carries the wrong domain tag (physical vs frequency)."""


class NyquistViolation(QuarticHelmholtzError, ValueError):
    """Requested frequency lies beyond the grid Nyquist radius."""


class CaseMismatch(QuarticHelmholtzError, ValueError):
    """Operation not defined for the parameter case."""


class InsufficientShells(QuarticHelmholtzError, ValueError):
    """Too few radial shells for a decay fit."""


class ExtrapolationDiverged(QuarticHelmholtzError, ArithmeticError):
    """Richardson extrapolants in epsilon failed to contract."""


class QuadratureFailure(QuarticHelmholtzError, ArithmeticError):
    """Adaptive quadrature did not reach its tolerance."""


class StepFailure(QuarticHelmholtzError, ArithmeticError):
    """ODE integrator step size collapsed."""


class DegenerateCollapse(QuarticHelmholtzError, ArithmeticError):
    """Dual iterate collapsed to zero."""


class NoConvergence(QuarticHelmholtzError, ArithmeticError):
    """Iteration budget exhausted; ``state`` holds the best iterate."""

    def __init__(self, message: str, state=None):
        super().__init__(message)
        self.state = state


class ConsistencyFailure(QuarticHelmholtzError, ArithmeticError):
    """Primal recovery violates the consistency or PDE-residual contract."""

    def __init__(self, message: str, consistency: float, residual: float):
        super().__init__(message)
        self.consistency = consistency
        self.residual = residual
