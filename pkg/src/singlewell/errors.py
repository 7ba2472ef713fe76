"""Exception types shared across the package."""


class SingleWellError(Exception):
    """Base class for all errors raised by this package."""


class DegenerateDomain(SingleWellError):
    """The interval length is not positive."""


class NotSingleWell(SingleWellError):
    """The potential violates the single-well sign pattern."""


class EnergyBelowGround(SingleWellError):
    """Requested energy lies below the ground energy E0 (beyond tolerance)."""


class OutOfDomain(SingleWellError):
    """Evaluation point lies outside [0, L]."""


class GridTooCoarse(SingleWellError):
    """Grid spacing exceeds the hard de Broglie resolution limit h > eps/2."""


class WindowEmpty(SingleWellError):
    """No eigenvalue lies in the requested window."""


class NoConvergence(SingleWellError):
    """Inverse iteration failed to converge within the iteration cap."""


class DegenerateCluster(SingleWellError):
    """More than one eigenvalue inside the shift ball of inverse iteration."""


class PhaseOverflow(SingleWellError):
    """Prüfer integration step control failed (step below 1e-15 * L)."""


class PhaseWindowTooSmall(SingleWellError):
    """Husimi phase grid does not cover the required momentum window."""


class EmptyForbiddenRegion(SingleWellError):
    """The set {V - E >= alpha^2} is empty."""


class EmptyObservationWindow(SingleWellError):
    """Observation window has empty interior or contains no grid point."""


class GroundRegimeHasNoTraceLimit(SingleWellError):
    """Boundary-trace limits are only stated for interior/high-energy regimes.

    In the ground regime both boundary points are elliptic, so the trace
    limits are 0; callers that want a number should catch this and use 0.
    """


class WindowNotControlled(SingleWellError):
    """Energy rule fails the geometric control condition for the window."""


class ConfigError(SingleWellError):
    """Experiment configuration failed to parse or validate."""
