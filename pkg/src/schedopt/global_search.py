"""Upper-level global search over strategy vectors.

Differential evolution (rand/1/bin with clip-to-bounds repair) over the
3-dimensional strategy space.  Each candidate is scored by generating its
power-law schedule, refining it locally under the midpoint objective, and
evaluating the spacing-penalized fitness of the refined schedule.
Selection is deferred (all trials of a generation are built from the
current population before any replacement), so the outcome is independent
of candidate evaluation order, and ties are broken toward the lower index.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .init_generator import (
    DEFAULT_BOUNDS,
    InfeasibleScheduleError,
    Schedule,
    StrategyVector,
    generate_initial,
)
from .local_opt import LocalOptSettings, refine
from .mep import MepConfig
from .spf import (
    SENTINEL_FITNESS,
    FitnessReport,
    SpfSettings,
    sentinel_report,
    spacing_penalized_fitness,
)


class AllCandidatesInfeasibleError(RuntimeError):
    """Every strategy in every generation failed feasibility (bad bounds)."""


@dataclass(frozen=True)
class SearchSettings:
    seed: int  # required: the search is reproducible only given a seed
    bounds: tuple = DEFAULT_BOUNDS  # ((rho), (t_eps), (t_max)) closed intervals
    population_size: int = 24
    max_generations: int = 40
    de_weight: float = 0.7  # differential weight F
    de_crossover: float = 0.9  # crossover rate CR
    stall_generations: int = 10
    stall_tol: float = 1e-8

    def __post_init__(self):
        if self.population_size < 4:
            raise ValueError("population_size must be >= 4 (mutation needs 3 distinct others)")
        if self.max_generations < 1:
            raise ValueError("max_generations must be >= 1")
        if not 0.0 < self.de_weight < 2.0:
            raise ValueError("de_weight must lie in (0, 2)")
        if not 0.0 <= self.de_crossover <= 1.0:
            raise ValueError("de_crossover must lie in [0, 1]")
        if len(self.bounds) != 3:
            raise ValueError("bounds must give one (lo, hi) interval per strategy dimension")
        for lo, hi in self.bounds:
            if not np.isfinite([lo, hi]).all() or hi < lo:
                raise ValueError(f"degenerate or non-finite bound ({lo}, {hi})")


@dataclass
class OptimizationRun:
    settings: SearchSettings
    nfe: int
    psi_star: StrategyVector
    schedule_star: Schedule
    report: FitnessReport
    trace: list[float] = field(default_factory=list)  # best-so-far per generation
    n_evaluations: int = 0
    n_generations: int = 0
    wall_time: float = 0.0


def evaluate_candidate(
    model,
    mep_cfg: MepConfig,
    spf_settings: SpfSettings,
    local_settings: LocalOptSettings,
    psi,
    nfe: int,
) -> tuple[Schedule | None, FitnessReport]:
    """Generate -> refine -> score one strategy.

    psi may be a StrategyVector or any 3-sequence (rho, t_eps, t_max).
    Infeasible strategies yield (None, sentinel report) instead of raising,
    which is what a population-based caller needs.
    """
    try:
        if not isinstance(psi, StrategyVector):
            psi = StrategyVector.from_array(psi)
        init = generate_initial(model, psi, nfe, local_settings.min_lambda_gap)
        refined = refine(mep_cfg, init, local_settings)
    except (InfeasibleScheduleError, ValueError):
        return None, sentinel_report(spf_settings, nfe)
    return refined, spacing_penalized_fitness(mep_cfg, spf_settings, refined, nfe)


def optimize(
    model,
    mep_cfg: MepConfig,
    spf_settings: SpfSettings,
    local_settings: LocalOptSettings,
    search_settings: SearchSettings,
    nfe: int,
) -> OptimizationRun:
    """Run the full two-level search and return the best strategy found.

    Deterministic for a fixed seed.  Raises AllCandidatesInfeasibleError when
    no strategy in any generation produced a feasible schedule.
    """
    if nfe < 2:
        raise ValueError("nfe must be at least 2")
    started = time.perf_counter()
    rng = np.random.default_rng(search_settings.seed)
    lo = np.array([b[0] for b in search_settings.bounds], dtype=float)
    hi = np.array([b[1] for b in search_settings.bounds], dtype=float)
    n_evals = 0

    def score(genome) -> tuple[Schedule | None, FitnessReport]:
        nonlocal n_evals
        n_evals += 1
        return evaluate_candidate(model, mep_cfg, spf_settings, local_settings, genome, nfe)

    if np.all(hi == lo):
        # singleton search space: nothing to evolve
        sched, report = score(lo)
        if sched is None:
            raise AllCandidatesInfeasibleError("the single strategy allowed by the bounds is infeasible")
        return OptimizationRun(
            settings=search_settings,
            nfe=nfe,
            psi_star=StrategyVector.from_array(lo),
            schedule_star=sched,
            report=report,
            trace=[report.total],
            n_evaluations=n_evals,
            n_generations=1,
            wall_time=time.perf_counter() - started,
        )

    k = search_settings.population_size
    population = lo + rng.random((k, 3)) * (hi - lo)
    results = [score(population[i]) for i in range(k)]
    fitness = np.array([r[1].total for r in results])

    best_idx = int(np.argmin(fitness))  # argmin takes the lowest index on ties
    best = (population[best_idx].copy(), *results[best_idx])
    trace = [float(fitness[best_idx])]

    generation = 1
    for generation in range(2, search_settings.max_generations + 1):
        trials = np.empty_like(population)
        for i in range(k):
            pool = np.delete(np.arange(k), i)
            r0, r1, r2 = rng.choice(pool, size=3, replace=False)
            mutant = population[r0] + search_settings.de_weight * (population[r1] - population[r2])
            mutant = np.clip(mutant, lo, hi)
            cross = rng.random(3) < search_settings.de_crossover
            cross[rng.integers(3)] = True
            trials[i] = np.where(cross, mutant, population[i])

        # deferred selection: evaluation order cannot change the outcome
        trial_results = [score(trials[i]) for i in range(k)]
        trial_fitness = np.array([r[1].total for r in trial_results])
        accept = trial_fitness <= fitness
        population[accept] = trials[accept]
        fitness[accept] = trial_fitness[accept]
        for i in np.nonzero(accept)[0]:
            results[i] = trial_results[i]

        gen_best = int(np.argmin(fitness))
        if fitness[gen_best] < best[2].total:
            best = (population[gen_best].copy(), *results[gen_best])
        trace.append(float(best[2].total))

        window = search_settings.stall_generations
        if len(trace) > window and (trace[-1 - window] - trace[-1]) < search_settings.stall_tol:
            break

    if best[1] is None or best[2].total >= SENTINEL_FITNESS:
        raise AllCandidatesInfeasibleError(
            "no feasible strategy found; check the search bounds against the model domain"
        )
    return OptimizationRun(
        settings=search_settings,
        nfe=nfe,
        psi_star=StrategyVector.from_array(best[0]),
        schedule_star=best[1],
        report=best[2],
        trace=trace,
        n_evaluations=n_evals,
        n_generations=generation,
        wall_time=time.perf_counter() - started,
    )
