"""Exception hierarchy shared by all modules.

The CLI maps :class:`InputError` (and subclasses) to exit code 1 and
:class:`NumericalError` (and subclasses) to exit code 2.
"""


class PolyprojError(Exception):
    pass


class InputError(PolyprojError, ValueError):
    """Malformed, non-finite or shape-inconsistent input."""


class SizeError(InputError):
    """Problem too large for an exhaustive routine."""


class RankError(InputError):
    """Equality constraint matrix is not of full row rank."""


class InfeasibleError(InputError):
    """The constraint set is empty."""


class NumericalError(PolyprojError, ArithmeticError):
    pass


class ConvergenceError(NumericalError):
    """Iteration cap hit.  Carries the best iterate seen so far."""

    def __init__(self, message, best=None, residual=float("nan"), node=None):
        super().__init__(message)
        self.best = best
        self.residual = residual
        self.node = node


class DivergenceError(NumericalError):
    """Training iterate left the configured norm ball."""
