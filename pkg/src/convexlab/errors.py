"""Exception hierarchy.

Hypothesis violations (a certificate's assumptions fail for the given input) are
kept apart from contract violations (the caller passed something malformed),
because the CLI reports them differently (a usage message versus a
hypothesis diagnostic), although both exit with status 2.
"""

from __future__ import annotations


class ConvexLabError(Exception):
    pass


class ContractViolation(ConvexLabError, ValueError):
    """Bad arguments: wrong dimension, malformed config, out-of-range option."""


class DomainError(ConvexLabError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class UnsupportedDimension(DomainError):
    pass


class HypothesisViolation(ConvexLabError):
    """A hypothesis required by a certificate does not hold."""


class NotCoercive(HypothesisViolation):
    pass


class NormNotPowerType(HypothesisViolation):
    pass


class HypothesisMissing(HypothesisViolation):
    pass


class MuNonpositive(HypothesisViolation):
    pass


class NoPreimageFound(ConvexLabError):
    def __init__(self, message: str, best_residual: float, best_point=None):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual
        self.best_point = best_point


class BudgetError(ConvexLabError):
    pass


class InternalError(ConvexLabError):
    pass
