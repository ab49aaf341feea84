"""schedopt: optimal timestep schedules for few-step diffusion sampling.

Given a noise-schedule model and a step budget, the package searches for
the sampling schedule that minimizes a midpoint error-proxy objective,
regularized by a spacing penalty, via a two-level optimization: a global
evolutionary search over a 3-parameter power-law initialization strategy
and a constrained local refinement of each candidate schedule.  An
analytic-diffusion lab over Gaussian data measures the true ODE endpoint
error of any schedule for validation at desk scale.
"""

__version__ = "0.1.0"

from .analytic_lab import (
    ComparisonRow,
    GaussianDataModel,
    TrajectoryResult,
    compare_schedules,
    edm_schedule,
    sample_trajectory,
    uniform_lambda_schedule,
    uniform_time_schedule,
)
from .global_search import (
    AllCandidatesInfeasibleError,
    OptimizationRun,
    SearchSettings,
    evaluate_candidate,
    optimize,
)
from .init_generator import (
    DEFAULT_BOUNDS,
    MIN_LAMBDA_GAP,
    InfeasibleScheduleError,
    Schedule,
    StrategyVector,
    generate_initial,
)
from .local_opt import LocalOptSettings, refine
from .mep import (
    MepConfig,
    ProxyOverflowError,
    QuadratureError,
    hybrid_midpoint_residual,
    j_mep,
    j_mep_gradient,
    quadrature_reference,
    standard_midpoint_residual,
)
from .noise_schedule import (
    KINDS,
    LambdaRangeError,
    NoiseScheduleModel,
    TimeDomainError,
    make_model,
)
from .spf import (
    SENTINEL_FITNESS,
    FitnessReport,
    SpfSettings,
    d_min,
    penalty,
    spacing_penalized_fitness,
)

__all__ = [
    "__version__",
    "AllCandidatesInfeasibleError",
    "ComparisonRow",
    "DEFAULT_BOUNDS",
    "FitnessReport",
    "GaussianDataModel",
    "InfeasibleScheduleError",
    "KINDS",
    "LambdaRangeError",
    "LocalOptSettings",
    "MIN_LAMBDA_GAP",
    "MepConfig",
    "NoiseScheduleModel",
    "OptimizationRun",
    "ProxyOverflowError",
    "QuadratureError",
    "SENTINEL_FITNESS",
    "Schedule",
    "SearchSettings",
    "SpfSettings",
    "StrategyVector",
    "TimeDomainError",
    "TrajectoryResult",
    "compare_schedules",
    "d_min",
    "edm_schedule",
    "evaluate_candidate",
    "generate_initial",
    "hybrid_midpoint_residual",
    "j_mep",
    "j_mep_gradient",
    "make_model",
    "optimize",
    "penalty",
    "quadrature_reference",
    "refine",
    "sample_trajectory",
    "spacing_penalized_fitness",
    "standard_midpoint_residual",
    "uniform_lambda_schedule",
    "uniform_time_schedule",
]
