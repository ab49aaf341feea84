"""Spacing-penalized fitness for the upper-level search.

Pure objective minima tend to cluster sampling timesteps; a squared-hinge
penalty on consecutive time gaps below an NFE-adaptive minimum distance
keeps the search away from such degenerate schedules.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .init_generator import Schedule
from .mep import MepConfig, ProxyOverflowError, j_mep

# finite worst-case fitness; ordered above any legitimate value so that
# infeasible candidates lose every comparison without crashing a search
SENTINEL_FITNESS = 1e30


@dataclass(frozen=True)
class SpfSettings:
    gamma: float = 100.0
    dmin_anchor_low: tuple[int, float] = (4, 0.15)  # (nfe, min time gap)
    dmin_anchor_high: tuple[int, float] = (20, 0.01)

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError("gamma must be non-negative")
        (n_lo, d_lo), (n_hi, d_hi) = self.dmin_anchor_low, self.dmin_anchor_high
        if n_hi <= n_lo or d_hi >= d_lo:
            raise ValueError("anchors must define a decreasing line in nfe")


@dataclass(frozen=True)
class FitnessReport:
    j_mep: float
    penalty: float
    gamma: float
    total: float
    min_gap_t: float
    d_min_used: float
    feasible: bool = True


def d_min(settings: SpfSettings, nfe: int) -> float:
    """Minimum allowed consecutive time gap, linear in nfe between the
    anchors and clamped to the anchor values outside them."""
    (n_lo, d_lo), (n_hi, d_hi) = settings.dmin_anchor_low, settings.dmin_anchor_high
    value = d_lo + (d_hi - d_lo) * (nfe - n_lo) / (n_hi - n_lo)
    return float(min(max(value, d_hi), d_lo))


def penalty(settings: SpfSettings, times, nfe: int) -> float:
    """Sum of squared hinge violations max(0, d_min - |t_{i+1} - t_i|)^2.

    Zero exactly when every consecutive gap is at least d_min(nfe).  Accepts
    raw time sequences (including ones with duplicated steps) so degenerate
    schedules can be scored.
    """
    gaps = np.abs(np.diff(np.asarray(times, dtype=float)))
    hinge = np.maximum(0.0, d_min(settings, nfe) - gaps)
    return float(np.sum(hinge**2))


def sentinel_report(settings: SpfSettings, nfe: int) -> FitnessReport:
    return FitnessReport(
        j_mep=SENTINEL_FITNESS,
        penalty=0.0,
        gamma=settings.gamma,
        total=SENTINEL_FITNESS,
        min_gap_t=0.0,
        d_min_used=d_min(settings, nfe),
        feasible=False,
    )


def spacing_penalized_fitness(
    cfg: MepConfig,
    settings: SpfSettings,
    sched: Schedule,
    nfe: int | None = None,
) -> FitnessReport:
    """Objective plus gamma-weighted spacing penalty for one schedule.

    Overflow in the objective is mapped to the finite sentinel fitness, not
    raised, so population-based callers survive pathological candidates.
    """
    if nfe is None:
        nfe = sched.nfe
    try:
        objective = j_mep(cfg, sched)
    except ProxyOverflowError:
        return sentinel_report(settings, nfe)
    pen = penalty(settings, sched.times, nfe)
    total = objective + settings.gamma * pen
    if not np.isfinite(total):
        return sentinel_report(settings, nfe)
    return FitnessReport(
        j_mep=objective,
        penalty=pen,
        gamma=settings.gamma,
        total=total,
        min_gap_t=sched.min_time_gap(),
        d_min_used=d_min(settings, nfe),
        feasible=True,
    )
