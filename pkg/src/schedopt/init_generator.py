"""Strategy vectors and power-law schedule initialization.

A strategy vector (rho, t_eps, t_max) compresses a whole schedule into
three numbers: the power-law exponent controlling how densely steps pack
toward the high-SNR end, and the two endpoint times.  The generator maps a
strategy to an (nfe + 1)-point schedule by spacing noise levels along
sigma_tilde^(1/rho) between sigma_tilde(t_eps) and sigma_tilde(t_max),
then converting to ascending log-SNR.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .noise_schedule import NoiseScheduleModel

# minimum ascending log-SNR gap for a schedule to count as feasible
MIN_LAMBDA_GAP = 1e-4

# default upper-level search box, one closed interval per strategy dimension
DEFAULT_RHO_BOUNDS = (3.0, 16.0)
DEFAULT_T_EPS_BOUNDS = (0.01, 0.03)
DEFAULT_T_MAX_BOUNDS = (0.96, 1.0)
DEFAULT_BOUNDS = (DEFAULT_RHO_BOUNDS, DEFAULT_T_EPS_BOUNDS, DEFAULT_T_MAX_BOUNDS)


class InfeasibleScheduleError(ValueError):
    """A schedule (or the strategy generating it) violates feasibility."""


@dataclass(frozen=True)
class StrategyVector:
    """Upper-level search point (rho, t_eps, t_max)."""

    rho: float
    t_eps: float
    t_max: float

    def __post_init__(self):
        if not np.isfinite([self.rho, self.t_eps, self.t_max]).all():
            raise ValueError("strategy components must be finite")
        if self.rho <= 0:
            raise ValueError("rho must be positive")
        if not 0.0 < self.t_eps < self.t_max:
            raise ValueError("need 0 < t_eps < t_max")

    def as_array(self) -> np.ndarray:
        return np.array([self.rho, self.t_eps, self.t_max], dtype=float)

    @classmethod
    def from_array(cls, x) -> "StrategyVector":
        rho, t_eps, t_max = (float(v) for v in x)
        return cls(rho, t_eps, t_max)


@dataclass
class Schedule:
    """An (nfe + 1)-point sampling schedule.

    lambdas ascend strictly (index 0 = highest noise, start of sampling);
    times are the paired t values and descend from near t_max to t_eps.
    """

    lambdas: np.ndarray
    times: np.ndarray

    def __post_init__(self):
        self.lambdas = np.asarray(self.lambdas, dtype=float)
        self.times = np.asarray(self.times, dtype=float)
        if self.lambdas.shape != self.times.shape or self.lambdas.ndim != 1:
            raise ValueError("lambdas and times must be 1-D arrays of equal length")
        if self.lambdas.size < 2:
            raise ValueError("a schedule needs at least two points")

    @property
    def nfe(self) -> int:
        return self.lambdas.size - 1

    def min_lambda_gap(self) -> float:
        return float(np.min(np.diff(self.lambdas)))

    def min_time_gap(self) -> float:
        return float(np.min(np.abs(np.diff(self.times))))

    def validate(self, min_lambda_gap: float = MIN_LAMBDA_GAP) -> None:
        """Raise InfeasibleScheduleError unless lambdas ascend by >= min_lambda_gap."""
        if self.min_lambda_gap() < min_lambda_gap:
            raise InfeasibleScheduleError(
                f"log-SNR gap {self.min_lambda_gap():.3g} below minimum {min_lambda_gap:.3g}"
            )
        if np.any(np.diff(self.times) >= 0):
            raise InfeasibleScheduleError("times must strictly descend")

    def replace_lambdas(self, model: NoiseScheduleModel, lambdas: np.ndarray) -> "Schedule":
        """New schedule with the given lambdas; endpoint times are preserved
        when the endpoint lambdas are unchanged, interior times re-inverted."""
        lambdas = np.asarray(lambdas, dtype=float)
        times = np.empty_like(lambdas)
        times[1:-1] = model.t_of_lambda(lambdas[1:-1]) if lambdas.size > 2 else ()
        times[0] = self.times[0] if lambdas[0] == self.lambdas[0] else model.t_of_lambda(lambdas[0])
        times[-1] = self.times[-1] if lambdas[-1] == self.lambdas[-1] else model.t_of_lambda(lambdas[-1])
        return Schedule(lambdas, times)

    @classmethod
    def from_times(cls, model: NoiseScheduleModel, times) -> "Schedule":
        """Build a schedule from descending times (ties allowed, for evaluating
        degenerate schedules; validate() still rejects them)."""
        times = np.asarray(times, dtype=float)
        return cls(np.asarray(model.lambda_of_t(times), dtype=float), times)

    @classmethod
    def from_lambdas(cls, model: NoiseScheduleModel, lambdas) -> "Schedule":
        lambdas = np.asarray(lambdas, dtype=float)
        return cls(lambdas, np.atleast_1d(model.t_of_lambda(lambdas)))


def generate_initial(
    model: NoiseScheduleModel,
    psi: StrategyVector,
    nfe: int,
    min_lambda_gap: float = MIN_LAMBDA_GAP,
) -> Schedule:
    """Generate the initial schedule for a strategy vector.

    Noise levels are placed at u = i/nfe, i = 0..nfe, along the power-law
    interpolation (st_min^(1/rho) + u (st_max^(1/rho) - st_min^(1/rho)))^rho
    between st_min = sigma_tilde(t_eps) and st_max = sigma_tilde(t_max), then
    converted to ascending log-SNR.  All levels are strictly positive; there
    is no zero terminal level.

    Raises InfeasibleScheduleError when the resulting log-SNR gaps fall
    below min_lambda_gap (evolutionary callers map this to a fitness
    sentinel rather than crashing).
    """
    if nfe < 2:
        raise ValueError("nfe must be at least 2")
    lo, hi = model.t_domain
    if not (lo <= psi.t_eps < psi.t_max <= hi):
        raise InfeasibleScheduleError(
            f"endpoints ({psi.t_eps}, {psi.t_max}) outside model domain [{lo}, {hi}]"
        )
    st_min = float(model.sigma_tilde(psi.t_eps))
    st_max = float(model.sigma_tilde(psi.t_max))
    u = np.arange(nfe + 1) / nfe
    root = st_min ** (1.0 / psi.rho) + u * (st_max ** (1.0 / psi.rho) - st_min ** (1.0 / psi.rho))
    st = root**psi.rho
    st[0], st[-1] = st_min, st_max  # endpoints exact, no round-trip dust

    lambdas = -np.log(st)[::-1]  # ascending: index 0 = highest noise
    if np.min(np.diff(lambdas)) < min_lambda_gap:
        raise InfeasibleScheduleError(
            "strategy collapses adjacent noise levels below the minimum log-SNR gap"
        )
    times = np.empty(nfe + 1)
    times[0], times[-1] = psi.t_max, psi.t_eps
    if nfe > 1:
        times[1:-1] = model.t_of_lambda(lambdas[1:-1])
    return Schedule(lambdas, times)
