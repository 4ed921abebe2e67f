"""Optimal obstacle placement for fractional (s, p) Poincare constants on grids."""

from .config import RunConfig, parse_config
from .design import (
    DesignResult, DesignVector, alternate_soft, bathtub_update, canonical_design,
    exhaustive_oracle, optimize_hard, optimize_soft,
)
from .eigensolver import Extremal, SolverOptions, solve_hard, solve_soft
from .errors import (
    BudgetExceededError, ConfigurationError, ConstraintError, ConvergenceError,
    NonlocalDesignError, ParameterError, ShapeError,
)
from .geometry import Domain, Grid, build_grid, diameter
from .kernel import (
    EnergyBreakdown, KernelMatrix, LocalEnergy, assemble_kernel, gagliardo_energy,
    gagliardo_gradient, local_energy, lp_mass, penalty_energy, penalty_gradient,
)
from .limits import (
    ContinuationLadder, GammaLimitRecord, bbm_pointwise_check, compute_K,
    gamma_limit_experiment, sigma_continuation,
)
from .records import ExperimentRecord, design_checksum, emit_records

__version__ = "0.1.0"
