"""Simulation of contracting actomyosin bundles with length-structured filament densities."""

from .config import (
    BoundaryData,
    Constant,
    DensityDataBounds,
    ModelParams,
    NumericalParams,
    PlateauProfile,
    Ramp,
    SeparableDensity,
    SimulationConfig,
    Sine,
    Table,
    load_config,
    shortness_bound,
    validate,
)
from .density import DensityGrid, FrictionCoefficients, coefficients, lemma41_bounds, moment
from .evolution import BundleState, RunOutcome, picard_step, run, step_fixed, step_free
from .exceptions import (
    AssumptionViolated,
    BundleCollapsed,
    CFLWarning,
    ContractivityViolated,
    ConvergenceWarning,
    DegenerateDensity,
    ForceGateFailed,
    MaxPrincipleViolated,
    SignConditionLost,
    SingularSystem,
)
from .oracles import (
    ExplicitSolution,
    asymptotic_steady_length,
    explicit_density,
    explicit_length,
    explicit_velocity,
    filament_age,
)
from .transport import advance, y_speed
from .velocity import VelocityProfile, force_from_profile, solve_fixed, solve_free

__version__ = "0.1.0"
