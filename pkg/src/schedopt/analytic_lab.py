"""Desk-scale ground-truth lab for schedule quality.

Diffusion over Gaussian data admits a closed-form posterior-mean denoiser,
so the probability-flow ODE can be integrated without a neural network and
the true endpoint error of any schedule measured directly.  Each sampler
step integrates the exact per-step solution

    x_{i+1} = (sigma_{i+1} / sigma_i) x_i
              + sigma_{i+1} * integral of e^lambda f(lambda) over the step,

with the integral approximated by the same hybrid midpoint rule the
objective models: f frozen at the pair midpoint, the exponential integrated
exactly.  The midpoint state is produced by a half-step first-order
predictor; a pure first-order (DDIM-style) variant is available for
contrast via ``variant="first-order"``.

Endpoint errors are measured against a dense uniform-log-SNR run of the
same flow from the same start state, so per-seed comparisons between
schedules sharing endpoints are exactly paired.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .init_generator import Schedule, StrategyVector, generate_initial
from .noise_schedule import NoiseScheduleModel

VARIANTS = ("hybrid-midpoint", "first-order")
REFERENCE_NFE = 1000


@dataclass(frozen=True)
class GaussianDataModel:
    """Isotropic Gaussian data N(mean, stdev^2 I) in `dim` dimensions."""

    mean: np.ndarray
    stdev: float
    dim: int

    def __post_init__(self):
        mean = np.broadcast_to(np.asarray(self.mean, dtype=float), (self.dim,)).copy()
        object.__setattr__(self, "mean", mean)
        if self.stdev < 0:
            raise ValueError("stdev must be non-negative")

    def denoise(self, x, alpha: float, sigma: float):
        """Exact posterior-mean predictor of the clean sample given x_t."""
        var = self.stdev**2
        return self.mean + alpha * var * (x - alpha * self.mean) / (alpha**2 * var + sigma**2)


@dataclass(frozen=True)
class TrajectoryResult:
    endpoint: np.ndarray
    reference_endpoint: np.ndarray
    endpoint_error: float
    variant: str


@dataclass(frozen=True)
class ComparisonRow:
    name: str
    mean_error: float
    std_error: float
    n_seeds: int
    variant: str


class _StepPlan:
    """Precomputed per-step coefficients for one (model, schedule, variant).

    Schedules are fixed, so every alpha/sigma and midpoint inversion is done
    once here; running a trajectory is then pure arithmetic and can be
    batched across seeds.
    """

    def __init__(self, model: NoiseScheduleModel, sched: Schedule, variant: str):
        if variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}")
        self.variant = variant
        lam = sched.lambdas
        alpha, sigma = model.alpha_sigma(sched.times)
        expl = np.exp(lam)
        self.alpha0, self.sigma0 = float(alpha[0]), float(sigma[0])
        self.node_alpha, self.node_sigma = alpha, sigma
        self.ratio_full = sigma[1:] / sigma[:-1]
        self.weight_full = sigma[1:] * np.diff(expl)
        if variant == "hybrid-midpoint":
            mid_lam = 0.5 * (lam[:-1] + lam[1:])
            mid_t = np.atleast_1d(model.t_of_lambda(mid_lam))
            self.mid_alpha, self.mid_sigma = model.alpha_sigma(mid_t)
            self.ratio_half = self.mid_sigma / sigma[:-1]
            self.weight_half = self.mid_sigma * (np.exp(mid_lam) - expl[:-1])

    def run(self, data: GaussianDataModel, x):
        """Advance start states (n, dim) or (dim,) through every step."""
        n_steps = self.ratio_full.size
        if self.variant == "hybrid-midpoint":
            for i in range(n_steps):
                predicted = data.denoise(x, self.node_alpha[i], self.node_sigma[i])
                x_mid = self.ratio_half[i] * x + self.weight_half[i] * predicted
                f_mid = data.denoise(x_mid, self.mid_alpha[i], self.mid_sigma[i])
                x = self.ratio_full[i] * x + self.weight_full[i] * f_mid
        else:
            for i in range(n_steps):
                predicted = data.denoise(x, self.node_alpha[i], self.node_sigma[i])
                x = self.ratio_full[i] * x + self.weight_full[i] * predicted
        return x


def _draw_start(data: GaussianDataModel, plan: _StepPlan, seeds) -> np.ndarray:
    """Forward-process start states x = alpha_0 x_0 + sigma_0 eps, one row per seed."""
    rows = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        x0 = data.mean + data.stdev * rng.standard_normal(data.dim)
        eps = rng.standard_normal(data.dim)
        rows.append(plan.alpha0 * x0 + plan.sigma0 * eps)
    return np.asarray(rows)


def _reference_schedule(model: NoiseScheduleModel, sched: Schedule, nfe: int) -> Schedule:
    return uniform_lambda_schedule(
        model,
        t_eps=float(sched.times[-1]),
        t_max=float(sched.times[0]),
        nfe=nfe,
        _lambda_endpoints=(float(sched.lambdas[0]), float(sched.lambdas[-1])),
    )


def sample_trajectory(
    data: GaussianDataModel,
    model: NoiseScheduleModel,
    sched: Schedule,
    seed: int,
    variant: str = "hybrid-midpoint",
    reference_nfe: int = REFERENCE_NFE,
) -> TrajectoryResult:
    """Endpoint of one seeded trajectory and its error against a dense run.

    The reference endpoint uses the same start state and step rule on a
    uniform-log-SNR schedule with `reference_nfe` steps between the same
    endpoints; when `sched` is itself that schedule the error is exactly 0.
    """
    plan = _StepPlan(model, sched, variant)
    ref_sched = _reference_schedule(model, sched, reference_nfe)
    ref_plan = plan if _same_schedule(sched, ref_sched) else _StepPlan(model, ref_sched, variant)
    x_start = _draw_start(data, plan, [seed])[0]
    endpoint = plan.run(data, x_start)
    reference = ref_plan.run(data, x_start)
    return TrajectoryResult(
        endpoint=endpoint,
        reference_endpoint=reference,
        endpoint_error=float(np.linalg.norm(endpoint - reference)),
        variant=variant,
    )


def _same_schedule(a: Schedule, b: Schedule) -> bool:
    return a.lambdas.shape == b.lambdas.shape and np.array_equal(a.lambdas, b.lambdas)


def compare_schedules(
    data: GaussianDataModel,
    model: NoiseScheduleModel,
    schedules,
    nfe: int,
    n_seeds: int,
    base_seed: int = 0,
    variant: str = "hybrid-midpoint",
    reference_nfe: int = REFERENCE_NFE,
) -> list[ComparisonRow]:
    """Mean and standard deviation of endpoint error per named schedule.

    `schedules` is a dict name -> Schedule (or a sequence of such pairs);
    all must share `nfe`.  Seeds base_seed..base_seed + n_seeds - 1 are
    shared across schedules, and schedules with identical endpoints share
    the identical dense reference, so comparisons are fully paired.
    """
    pairs = list(schedules.items()) if isinstance(schedules, dict) else list(schedules)
    if not pairs:
        raise ValueError("need at least one named schedule to compare")
    for name, sched in pairs:
        if sched.nfe != nfe:
            raise ValueError(f"schedule {name!r} has nfe={sched.nfe}, expected {nfe}")
    seeds = [base_seed + i for i in range(n_seeds)]
    ref_cache: dict[tuple, np.ndarray] = {}
    rows = []
    for name, sched in pairs:
        plan = _StepPlan(model, sched, variant)
        x_start = _draw_start(data, plan, seeds)
        endpoints = plan.run(data, x_start)
        key = (round(float(sched.lambdas[0]), 12), round(float(sched.lambdas[-1]), 12))
        if key not in ref_cache:
            ref_plan = _StepPlan(model, _reference_schedule(model, sched, reference_nfe), variant)
            ref_cache[key] = ref_plan.run(data, x_start)
        errors = np.linalg.norm(endpoints - ref_cache[key], axis=1)
        rows.append(
            ComparisonRow(
                name=name,
                mean_error=float(np.mean(errors)),
                std_error=float(np.std(errors)),
                n_seeds=n_seeds,
                variant=variant,
            )
        )
    return rows


# -- baseline schedule families (comparison-only; not search initializers) ----


def uniform_time_schedule(model: NoiseScheduleModel, t_eps: float, t_max: float, nfe: int) -> Schedule:
    """nfe + 1 points equally spaced in time from t_max down to t_eps."""
    times = np.linspace(t_max, t_eps, nfe + 1)
    return Schedule(np.asarray(model.lambda_of_t(times), dtype=float), times)


def uniform_lambda_schedule(
    model: NoiseScheduleModel,
    t_eps: float,
    t_max: float,
    nfe: int,
    _lambda_endpoints: tuple[float, float] | None = None,
) -> Schedule:
    """nfe + 1 points equally spaced in log-SNR between the endpoint times."""
    if _lambda_endpoints is None:
        lam_lo = float(model.lambda_of_t(t_max))
        lam_hi = float(model.lambda_of_t(t_eps))
    else:
        lam_lo, lam_hi = _lambda_endpoints
    lambdas = np.linspace(lam_lo, lam_hi, nfe + 1)
    times = np.empty(nfe + 1)
    times[0], times[-1] = t_max, t_eps
    if nfe > 1:
        times[1:-1] = model.t_of_lambda(lambdas[1:-1])
    return Schedule(lambdas, times)


def edm_schedule(
    model: NoiseScheduleModel, t_eps: float, t_max: float, nfe: int, rho: float = 7.0
) -> Schedule:
    """Power-law baseline at a fixed exponent (the classic rho = 7 choice)."""
    return generate_initial(model, StrategyVector(rho, t_eps, t_max), nfe)
