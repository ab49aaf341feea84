"""Noise-schedule models and coordinate transforms.

A model maps continuous time t in [t_floor, 1.0] to the forward-process
signal and noise scales (alpha_t, sigma_t).  Two derived coordinates are
used throughout the package: the noise-level parameter sigma_tilde =
sigma_t / alpha_t, strictly increasing in t, and the log-SNR lambda =
log(alpha_t / sigma_t) = -log(sigma_tilde), strictly decreasing in t.

Variance-preserving kinds are defined by a discrete 1000-entry beta grid
(the DDPM / Stable Diffusion training convention) lifted to continuous
time by monotone cubic (PCHIP) interpolation of log alpha-bar.  PCHIP
preserves the strict monotonicity of the grid and is exact at the nodes,
so values at t = k/1000 coincide with the direct product of (1 - beta_i).
"""

from __future__ import annotations

import math

import numpy as np
from scipy.interpolate import PchipInterpolator
from scipy.special import expit


class TimeDomainError(ValueError):
    """Requested time lies outside the model's [t_floor, 1.0] domain."""


class LambdaRangeError(ValueError):
    """Requested log-SNR lies outside the model's attainable range."""


VP_KINDS = ("vp-linear-beta", "vp-scaled-linear-beta", "vp-cosine")
VE_KINDS = ("ve-identity",)
KINDS = VP_KINDS + VE_KINDS

# accepted shorthand for the CLI and config files
KIND_ALIASES = {
    "vp-linear": "vp-linear-beta",
    "vp-scaled-linear": "vp-scaled-linear-beta",
}

DEFAULT_PARAMS = {
    "vp-linear-beta": {"beta_start": 1e-4, "beta_end": 0.02, "num_train_steps": 1000},
    "vp-scaled-linear-beta": {"beta_start": 0.00085, "beta_end": 0.012, "num_train_steps": 1000},
    "vp-cosine": {"offset": 0.008, "beta_clip": 0.999, "num_train_steps": 1000},
    "ve-identity": {},
}

DEFAULT_T_FLOOR = 1e-3

# bisection is run until the time bracket is narrower than this, which keeps
# the log-SNR inversion error below 1e-10 even where d(lambda)/dt is steep
_BISECT_T_TOL = 1e-14
_BISECT_MAX_ITER = 80
_EDGE_SLACK = 1e-12


def _beta_grid(kind: str, params: dict) -> np.ndarray:
    k = int(params["num_train_steps"])
    if kind == "vp-linear-beta":
        return np.linspace(params["beta_start"], params["beta_end"], k)
    if kind == "vp-scaled-linear-beta":
        return np.linspace(math.sqrt(params["beta_start"]), math.sqrt(params["beta_end"]), k) ** 2
    if kind == "vp-cosine":
        s = params["offset"]

        def abar(t):
            return np.cos((t + s) / (1 + s) * np.pi / 2) ** 2

        t = np.arange(k + 1) / k
        ab = abar(t) / abar(0.0)
        betas = 1.0 - ab[1:] / ab[:-1]
        return np.clip(betas, 0.0, params["beta_clip"])
    raise ValueError(f"unknown VP kind {kind!r}")


class NoiseScheduleModel:
    """Immutable diffusion noise-schedule model.

    Parameters
    ----------
    kind : one of KINDS (aliases in KIND_ALIASES are accepted)
    params : per-kind scalar parameters; missing keys take DEFAULT_PARAMS
    t_floor : lower edge of the time domain, > 0
    """

    def __init__(self, kind: str, params: dict | None = None, t_floor: float = DEFAULT_T_FLOOR):
        kind = KIND_ALIASES.get(kind, kind)
        if kind not in KINDS:
            raise ValueError(f"unknown noise-schedule kind {kind!r}; expected one of {KINDS}")
        if not 0.0 < t_floor < 1.0:
            raise ValueError("t_floor must lie in (0, 1)")
        merged = dict(DEFAULT_PARAMS[kind])
        for key, value in (params or {}).items():
            if key not in merged:
                raise ValueError(f"unknown parameter {key!r} for kind {kind!r}")
            merged[key] = type(merged[key])(value)
        self.kind = kind
        self.params = merged
        self.t_floor = float(t_floor)
        if kind in VP_KINDS:
            betas = _beta_grid(kind, merged)
            k = betas.size
            nodes_t = np.arange(k + 1) / k
            log_abar = np.concatenate([[0.0], np.cumsum(np.log1p(-betas))])
            self._log_abar = PchipInterpolator(nodes_t, log_abar)
        else:
            self._log_abar = None
        self.lambda_min = float(self.lambda_of_t(1.0))  # most noise
        self.lambda_max = float(self.lambda_of_t(self.t_floor))  # least noise

    # -- time domain ------------------------------------------------------

    @property
    def t_domain(self) -> tuple[float, float]:
        return (self.t_floor, 1.0)

    @property
    def is_variance_preserving(self) -> bool:
        return self.kind in VP_KINDS

    def _check_t(self, t):
        t = np.asarray(t, dtype=float)
        if np.any(t < self.t_floor - _EDGE_SLACK) or np.any(t > 1.0 + _EDGE_SLACK):
            raise TimeDomainError(
                f"time outside domain [{self.t_floor}, 1.0] for model {self.kind!r}"
            )
        return np.clip(t, self.t_floor, 1.0)

    # -- forward-process scales -------------------------------------------

    def alpha_sigma(self, t):
        """Signal and noise scales (alpha_t, sigma_t) at time t."""
        t = self._check_t(t)
        if self._log_abar is None:
            return np.ones_like(t), t
        log_ab = self._log_abar(t)
        # 1 - abar via expm1 keeps sigma accurate when abar is close to 1
        return np.exp(0.5 * log_ab), np.sqrt(-np.expm1(log_ab))

    def sigma_tilde(self, t):
        """Noise-level parameter sigma_t / alpha_t."""
        t = self._check_t(t)
        if self._log_abar is None:
            return t
        log_ab = self._log_abar(t)
        return np.sqrt(np.expm1(-log_ab))

    def lambda_of_t(self, t):
        """Log signal-to-noise ratio log(alpha_t / sigma_t)."""
        t = self._check_t(t)
        if self._log_abar is None:
            return -np.log(t)
        log_ab = self._log_abar(t)
        return 0.5 * (log_ab - np.log(-np.expm1(log_ab)))

    # -- inversion ----------------------------------------------------------

    def t_of_lambda(self, lam):
        """Invert lambda_of_t by bisection (lambda is strictly decreasing in t)."""
        lam = np.asarray(lam, dtype=float)
        if np.any(lam < self.lambda_min - 1e-9) or np.any(lam > self.lambda_max + 1e-9):
            raise LambdaRangeError(
                f"log-SNR outside attainable range [{self.lambda_min:.6g}, "
                f"{self.lambda_max:.6g}] for model {self.kind!r}"
            )
        scalar = lam.ndim == 0
        target = np.atleast_1d(lam)
        lo = np.full_like(target, self.t_floor)
        hi = np.ones_like(target)
        for _ in range(_BISECT_MAX_ITER):
            mid = 0.5 * (lo + hi)
            too_small = self.lambda_of_t(mid) > target  # t too small -> lambda too high
            lo = np.where(too_small, mid, lo)
            hi = np.where(too_small, hi, mid)
            if np.max(hi - lo) < _BISECT_T_TOL:
                break
        out = 0.5 * (lo + hi)
        # snap exact endpoints so round trips through the domain edges are clean
        out[np.abs(target - self.lambda_min) <= 1e-12] = 1.0
        out[np.abs(target - self.lambda_max) <= 1e-12] = self.t_floor
        return float(out[0]) if scalar else out

    # -- error proxy --------------------------------------------------------

    def error_proxy(self, t, p: int):
        """Denoiser error proxy sigma_t^p / alpha_t at time t."""
        if p < 0:
            raise ValueError("p must be a non-negative integer")
        alpha, sigma = self.alpha_sigma(t)
        return sigma**p / alpha

    def error_proxy_lambda(self, lam, p: int):
        """Error proxy expressed as a function of log-SNR.

        For VP models alpha = (1 + e^{-2 lam})^{-1/2} and sigma =
        alpha * e^{-lam}, so sigma^p / alpha = e^{-p lam} (1 + e^{-2 lam})^{-(p-1)/2};
        for VE models (alpha = 1) the proxy is e^{-p lam}.  Both agree exactly
        with error_proxy(t_of_lambda(lam), p) and avoid the inversion.
        """
        if p < 0:
            raise ValueError("p must be a non-negative integer")
        lam = np.asarray(lam, dtype=float)
        if self._log_abar is None:
            return np.exp(-p * lam)
        # log(1 + e^{-2 lam}) computed overflow-free
        softplus = np.logaddexp(0.0, -2.0 * lam)
        return np.exp(-p * lam - 0.5 * (p - 1) * softplus)

    def error_proxy_lambda_derivative(self, lam, p: int):
        """d/d(lambda) of error_proxy_lambda."""
        value = self.error_proxy_lambda(lam, p)
        lam = np.asarray(lam, dtype=float)
        if self._log_abar is None:
            return -p * value
        # sigma^2 as a function of lambda is 1 / (1 + e^{2 lam})
        sigma_sq = expit(-2.0 * lam)
        return value * (-p + (p - 1) * sigma_sq)

    # -- misc ----------------------------------------------------------------

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params), "t_floor": self.t_floor}

    @classmethod
    def from_dict(cls, data: dict) -> "NoiseScheduleModel":
        return cls(data["kind"], data.get("params"), data.get("t_floor", DEFAULT_T_FLOOR))

    def __repr__(self) -> str:
        return f"NoiseScheduleModel(kind={self.kind!r}, params={self.params!r}, t_floor={self.t_floor!r})"


def make_model(kind: str, params: dict | None = None, t_floor: float = DEFAULT_T_FLOOR) -> NoiseScheduleModel:
    """Convenience factory; accepts the CLI kind aliases."""
    return NoiseScheduleModel(kind, params, t_floor)
