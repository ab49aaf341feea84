"""Constrained local refinement of a schedule under the midpoint objective.

The interior log-SNR values are optimized with the analytic gradient while
the ordering constraint is made structural: the schedule is re-expressed as
positive gaps

    l_k = l_0 + sum_{j<=k} g_j,   g_j = gap_min + C * softmax(w)_j,

so every trial point any line search can visit is a feasible schedule and
the minimum-gap constraint can never be violated, even transiently.  The
bounded quasi-Newton solve (L-BFGS-B) then only sees simple bounds.  By
default the endpoints stay fixed (the upper-level strategy already owns
them); "free" mode additionally optimizes both endpoints inside the default
search box, for ablations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .init_generator import (
    DEFAULT_T_EPS_BOUNDS,
    DEFAULT_T_MAX_BOUNDS,
    MIN_LAMBDA_GAP,
    InfeasibleScheduleError,
    Schedule,
)
from .mep import MepConfig, j_mep

_BAD_VALUE = 1e30
_INIT_GRAD_TOL = 1e-12


@dataclass(frozen=True)
class LocalOptSettings:
    max_iterations: int = 200
    convergence_tol: float = 1e-9  # relative objective-decrease threshold
    min_lambda_gap: float = MIN_LAMBDA_GAP
    endpoint_policy: str = "fixed"  # "fixed" | "free"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be >= 1")
        if self.min_lambda_gap <= 0:
            raise ValueError("min_lambda_gap must be positive")
        if self.endpoint_policy not in ("fixed", "free"):
            raise ValueError("endpoint_policy must be 'fixed' or 'free'")


def refine(
    cfg: MepConfig,
    init: Schedule,
    settings: LocalOptSettings | None = None,
    iterate_callback=None,
) -> Schedule:
    """Refine a feasible schedule; never returns one with a higher objective.

    Deterministic for identical inputs.  Non-progress returns the input
    unchanged; an infeasible input raises InfeasibleScheduleError.  When
    given, iterate_callback receives the log-SNR vector of every accepted
    iterate (used to assert feasibility preservation in tests).
    """
    settings = settings or LocalOptSettings()
    init.validate(settings.min_lambda_gap)
    n_gaps = init.nfe
    model, p = cfg.model, cfg.p
    free = settings.endpoint_policy == "free"
    if n_gaps < 2 and not free:
        return init  # no interior point to move

    gap_min = settings.min_lambda_gap
    lam0_fixed, lamN_fixed = float(init.lambdas[0]), float(init.lambdas[-1])

    def unpack(x):
        """x -> (lambdas, softmax weights, cumulative weights, span coefficient)."""
        w = x[:n_gaps]
        lam0 = x[n_gaps] if free else lam0_fixed
        lamN = x[n_gaps + 1] if free else lamN_fixed
        z = np.exp(w - np.max(w))
        s = z / z.sum()
        coeff = (lamN - lam0) - n_gaps * gap_min
        cum = np.cumsum(s)
        lams = np.empty(n_gaps + 1)
        lams[0] = lam0
        lams[1:] = lam0 + gap_min * np.arange(1, n_gaps + 1) + coeff * cum
        lams[-1] = lamN  # exact, cum[-1] == 1 up to rounding
        return lams, s, cum, coeff

    def value_and_grad(x):
        lams, s, cum, coeff = unpack(x)
        if coeff <= 0:
            return _BAD_VALUE, np.zeros_like(x)
        expl = np.exp(lams)
        mids = 0.5 * (lams[:-1] + lams[1:])
        proxy = model.error_proxy_lambda(mids, p)
        dproxy = model.error_proxy_lambda_derivative(mids, p)
        d_exp = np.diff(expl)
        value = float(np.sum(proxy * expl[:-1] * np.expm1(np.diff(lams))))
        if not np.isfinite(value):
            return _BAD_VALUE, np.zeros_like(x)
        glam = np.zeros_like(lams)
        glam[:-1] += 0.5 * dproxy * d_exp - proxy * expl[:-1]
        glam[1:] += 0.5 * dproxy * d_exp + proxy * expl[1:]
        # chain rule into gap logits: dlam_k/dw_j = coeff * s_j * ([j <= k-1] - cum_{k-1})
        gl = glam[1:]
        suffix = np.cumsum(gl[::-1])[::-1]
        gw = coeff * s * (suffix - float(np.dot(gl, cum)))
        if free:
            cum_full = np.concatenate([[0.0], cum])
            g0 = float(np.dot(glam, 1.0 - cum_full))
            gN = float(np.dot(glam, cum_full))
            return value, np.concatenate([gw, [g0, gN]])
        return value, gw

    # initial logits from the input gaps
    gaps = np.diff(init.lambdas)
    span = lamN_fixed - lam0_fixed
    coeff0 = span - n_gaps * gap_min
    if coeff0 <= 0:
        raise InfeasibleScheduleError("schedule span leaves no room above the minimum gap")
    s0 = np.maximum((gaps - gap_min) / coeff0, 1e-12)
    x0 = np.log(s0)
    bounds = [(None, None)] * n_gaps
    if free:
        t_lo, t_hi = model.t_domain
        tmax_box = (max(DEFAULT_T_MAX_BOUNDS[0], t_lo), min(DEFAULT_T_MAX_BOUNDS[1], t_hi))
        teps_box = (max(DEFAULT_T_EPS_BOUNDS[0], t_lo), min(DEFAULT_T_EPS_BOUNDS[1], t_hi))
        lam0_box = sorted(float(model.lambda_of_t(t)) for t in tmax_box)
        lamN_box = sorted(float(model.lambda_of_t(t)) for t in teps_box)
        x0 = np.concatenate([x0, [np.clip(lam0_fixed, *lam0_box), np.clip(lamN_fixed, *lamN_box)]])
        bounds += [tuple(lam0_box), tuple(lamN_box)]

    _, g0_vec = value_and_grad(x0)
    if float(np.linalg.norm(g0_vec)) < _INIT_GRAD_TOL:
        return init  # already stationary (e.g. a telescoping proxy)

    callback = None
    if iterate_callback is not None:
        def callback(xk):
            iterate_callback(unpack(xk)[0].copy())

    result = minimize(
        value_and_grad,
        x0,
        jac=True,
        method="L-BFGS-B",
        bounds=bounds,
        callback=callback,
        options={
            "maxiter": settings.max_iterations,
            "maxfun": 100 * settings.max_iterations,
            "ftol": settings.convergence_tol,
            "gtol": 1e-12,
        },
    )

    lams_out = unpack(result.x)[0]
    if free:
        refined = Schedule.from_lambdas(model, lams_out)
    else:
        refined = init.replace_lambdas(model, lams_out)
    # monotone-improvement contract, evaluated through the public objective
    if j_mep(cfg, refined) >= j_mep(cfg, init):
        return init
    return refined
