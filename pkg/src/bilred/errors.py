"""Exception types raised by the numerical routines in this package.

Input validation problems (wrong shapes, bad parameter values) raise plain
``ValueError``; the classes below mark genuine numerical failures.
"""


class BilredError(Exception):
    """Base class for numerical failures."""


class StabilityError(BilredError):
    """A required (generalized) stability condition does not hold."""


class SolveError(BilredError):
    """A matrix equation solve failed or missed its residual target."""


class FeasibilityError(BilredError):
    """A matrix inequality certificate could not be produced."""


class BalancingError(BilredError):
    """The balancing transformation is undefined for the given Gramian pair."""


class SimulationError(BilredError):
    """Time integration produced non-finite values."""


class HsvTieWarning(UserWarning):
    """Two Hankel singular values at the truncation index are (nearly) equal."""
