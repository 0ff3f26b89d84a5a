"""Exception types raised by the solvers."""


class ChemorepError(Exception):
    """Base class for every error raised by this package."""


class StabilityViolation(ChemorepError):
    """A time step breaks the positivity/M-matrix preconditions of the scheme."""


class SolverFailure(ChemorepError):
    """An iterative linear solve did not reach its tolerance."""


class NegativeInitialData(ChemorepError, ValueError):
    pass


class KappaViolation(ChemorepError):
    """The chemical concentration left the band ``v >= kappa / 2`` while seeding."""


class LineSearchFailure(ChemorepError):
    """Armijo backtracking exhausted its shrink budget."""

    def __init__(self, message, last_control=None, history=None):
        super().__init__(message)
        self.last_control = last_control
        self.history = history


class GridMismatch(ChemorepError, ValueError):
    pass
