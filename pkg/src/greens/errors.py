"""Exception types shared across the solver modules."""


class GreensError(Exception):
    """Base class for all numerical and configuration failures."""


class NearEigenvalue(GreensError):
    """Wronskian of the homogeneous pair is numerically zero: the spectral
    parameter sits (too close) on an eigenvalue of the confined operator."""


class ShootingDivergence(GreensError):
    """Newton iteration on the free wall coefficient failed to converge."""


class NodeEncountered(GreensError):
    """The diagonal profile passed through zero in the interior; the
    off-diagonal reconstruction would be singular there."""


class TailNotConverged(GreensError):
    """A semi-infinite quadrature or partial-wave sum could not reach the
    requested tail bound.  ``achieved`` carries the best bound reached."""

    def __init__(self, message, achieved=None):
        super().__init__(message)
        self.achieved = achieved


class ContourNearPole(GreensError):
    """A spectral-parameter contour passed too close to an eigenvalue."""


class StepSizeUnderflow(GreensError):
    """The ODE integrator stalled.  ``location`` is the abscissa at failure."""

    def __init__(self, message, location=None):
        super().__init__(message)
        self.location = location


class RankDeficientBasis(GreensError):
    """The expansion-fit design matrix is numerically rank deficient on the
    sampled window (basis elements indistinguishable there)."""


class ConfigError(GreensError):
    """A scenario configuration failed validation."""
