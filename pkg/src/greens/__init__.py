"""Green's functions of confined Schrodinger operators.

Direct (Wronskian / spectral-sum) and inverse (diagonal-profile) solvers in
1D, dimensional reductions for stratified and radially symmetric 3D systems,
an exact gradient-expansion engine, implicit-surface wall geometry with
universal boundary-coefficient predictions, and a scenario-driven CLI.
"""

__version__ = "0.1.0"

from .errors import (ConfigError, ContourNearPole, GreensError, NearEigenvalue,
                     NodeEncountered, RankDeficientBasis, ShootingDivergence,
                     StepSizeUnderflow, TailNotConverged)
from .foundation import (ComplexEnergy, DomainSpec, ExpansionFit, PotentialModel,
                         fit_expansion, gauge_shift, geometric_window,
                         integrate_ode2, legendre_all, special, sqrt_upper)
from .direct1d import (Green1D, SpectralOracle, build_green, build_spectral_oracle,
                       green_direct, homogeneous_pair, spectral_oracle)
