"""Command-line interface: optimize, evaluate, compare, validate.

Configuration is a flat key=value text file ('#' starts a comment); every
key can be overridden by the CLI flag of the same name.  Exit codes:
0 success, 1 usage/config error, 2 search failure.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .analytic_lab import (
    ComparisonRow,
    GaussianDataModel,
    compare_schedules,
    edm_schedule,
    uniform_lambda_schedule,
    uniform_time_schedule,
)
from .global_search import AllCandidatesInfeasibleError, SearchSettings, optimize
from .init_generator import Schedule, StrategyVector
from .local_opt import LocalOptSettings
from .mep import (
    MepConfig,
    hybrid_midpoint_residual,
    j_mep,
    quadrature_reference,
    standard_midpoint_residual,
)
from .noise_schedule import NoiseScheduleModel
from .spf import SpfSettings, d_min, penalty, spacing_penalized_fitness

GRID_SIZE = 1000

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_SEARCH_FAILED = 2


class ConfigError(ValueError):
    pass


def _bounds_value(text: str) -> tuple[float, float]:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"expected 'lo,hi', got {text!r}")
    return float(parts[0]), float(parts[1])


def _anchor_value(text: str) -> tuple[int, float]:
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigError(f"expected 'nfe:gap', got {text!r}")
    return int(parts[0]), float(parts[1])


# key -> (caster, help); every config key is also a --flag of the same name
_OPTIONS = {
    "model": (str, "noise-schedule kind (vp-linear-beta, vp-scaled-linear-beta, vp-cosine, ve-identity)"),
    "beta-start": (float, "first beta of the discrete grid (VP beta kinds)"),
    "beta-end": (float, "last beta of the discrete grid (VP beta kinds)"),
    "train-steps": (int, "number of discrete training steps in the beta grid"),
    "cosine-offset": (float, "offset parameter of the cosine schedule"),
    "beta-clip": (float, "upper clip for cosine betas"),
    "t-floor": (float, "lower edge of the model time domain"),
    "nfe": (int, "number of solver steps (function evaluations)"),
    "p": (int, "error-proxy exponent"),
    "gamma": (float, "spacing penalty weight (0 disables the penalty)"),
    "seed": (int, "search RNG seed"),
    "population": (int, "evolution population size"),
    "generations": (int, "maximum number of generations"),
    "de-weight": (float, "differential weight F"),
    "de-crossover": (float, "crossover rate CR"),
    "stall-generations": (int, "early-stop window in generations"),
    "stall-tol": (float, "best-fitness improvement threshold for early stop"),
    "bounds-rho": (_bounds_value, "search interval for rho, as 'lo,hi'"),
    "bounds-teps": (_bounds_value, "search interval for t_eps, as 'lo,hi'"),
    "bounds-tmax": (_bounds_value, "search interval for t_max, as 'lo,hi'"),
    "max-iterations": (int, "local refinement iteration cap"),
    "convergence-tol": (float, "local refinement relative decrease threshold"),
    "min-lambda-gap": (float, "minimum ascending log-SNR gap"),
    "endpoint-policy": (str, "local refinement endpoints: fixed or free"),
    "dmin-low": (_anchor_value, "low anchor of the minimum-gap line, as 'nfe:gap'"),
    "dmin-high": (_anchor_value, "high anchor of the minimum-gap line, as 'nfe:gap'"),
    "out": (str, "output path for exports"),
    "format": (str, "export format: json or list"),
}

_DEFAULTS = {
    "model": "vp-scaled-linear-beta",
    "nfe": 4,
    "p": 2,
    "gamma": 100.0,
    "seed": 0,
    "format": "json",
}


def _read_config_file(path: str) -> dict:
    values = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
        key, _, text = line.partition("=")
        key = key.strip()
        if key not in _OPTIONS:
            raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
        caster = _OPTIONS[key][0]
        try:
            values[key] = caster(text.strip())
        except (ValueError, ConfigError) as exc:
            raise ConfigError(f"{path}:{lineno}: bad value for {key!r}: {exc}") from exc
    return values


def _merge_config(args: argparse.Namespace) -> dict:
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        cfg.update(_read_config_file(args.config))
    for key in _OPTIONS:
        value = getattr(args, key.replace("-", "_"), None)
        if value is not None:
            cfg[key] = value
    return cfg


def _build_model(cfg: dict) -> NoiseScheduleModel:
    param_keys = {
        "beta-start": "beta_start",
        "beta-end": "beta_end",
        "train-steps": "num_train_steps",
        "cosine-offset": "offset",
        "beta-clip": "beta_clip",
    }
    params = {param_keys[k]: cfg[k] for k in param_keys if k in cfg}
    return NoiseScheduleModel(cfg["model"], params or None, cfg.get("t-floor", 1e-3))


def _build_settings(cfg: dict):
    model = _build_model(cfg)
    mep_cfg = MepConfig(model, p=cfg["p"])
    spf_kwargs = {"gamma": cfg["gamma"]}
    if "dmin-low" in cfg:
        spf_kwargs["dmin_anchor_low"] = cfg["dmin-low"]
    if "dmin-high" in cfg:
        spf_kwargs["dmin_anchor_high"] = cfg["dmin-high"]
    spf_settings = SpfSettings(**spf_kwargs)
    local_kwargs = {}
    for key, name in [
        ("max-iterations", "max_iterations"),
        ("convergence-tol", "convergence_tol"),
        ("min-lambda-gap", "min_lambda_gap"),
        ("endpoint-policy", "endpoint_policy"),
    ]:
        if key in cfg:
            local_kwargs[name] = cfg[key]
    local_settings = LocalOptSettings(**local_kwargs)
    search_kwargs = {"seed": cfg["seed"]}
    defaults = SearchSettings(seed=0)
    bounds = [list(b) for b in defaults.bounds]
    for i, key in enumerate(["bounds-rho", "bounds-teps", "bounds-tmax"]):
        if key in cfg:
            bounds[i] = list(cfg[key])
    search_kwargs["bounds"] = tuple(tuple(b) for b in bounds)
    for key, name in [
        ("population", "population_size"),
        ("generations", "max_generations"),
        ("de-weight", "de_weight"),
        ("de-crossover", "de_crossover"),
        ("stall-generations", "stall_generations"),
        ("stall-tol", "stall_tol"),
    ]:
        if key in cfg:
            search_kwargs[name] = cfg[key]
    search_settings = SearchSettings(**search_kwargs)
    return model, mep_cfg, spf_settings, local_settings, search_settings


def time_to_index(t: float) -> int:
    """Map a continuous time to the 0-999 integer grid: round(t*1000) - 1, clamped."""
    return int(min(max(math.floor(t * GRID_SIZE + 0.5) - 1, 0), GRID_SIZE - 1))


def _export_payload(run, model, mep_cfg, spf_settings, local_settings, cfg) -> dict:
    sched = run.schedule_star
    indices = [time_to_index(t) for t in sched.times[:-1]]
    return {
        "tool_version": __version__,
        "nfe": run.nfe,
        "seed": run.settings.seed,
        "p": mep_cfg.p,
        "gamma": spf_settings.gamma,
        "penalty_disabled": spf_settings.gamma == 0.0,
        "d_min_used": run.report.d_min_used,
        "psi_star": {
            "rho": run.psi_star.rho,
            "t_eps": run.psi_star.t_eps,
            "t_max": run.psi_star.t_max,
        },
        "lambdas": sched.lambdas.tolist(),
        "times": sched.times.tolist(),
        "indices": indices,
        "terminal_time": float(sched.times[-1]),
        "j_mep": run.report.j_mep,
        "penalty": run.report.penalty,
        "spf_total": run.report.total,
        "min_gap_t": run.report.min_gap_t,
        "model": model.to_dict(),
        "settings": {
            "search": {
                "bounds": [list(b) for b in run.settings.bounds],
                "population_size": run.settings.population_size,
                "max_generations": run.settings.max_generations,
                "de_weight": run.settings.de_weight,
                "de_crossover": run.settings.de_crossover,
                "stall_generations": run.settings.stall_generations,
                "stall_tol": run.settings.stall_tol,
            },
            "local": {
                "max_iterations": local_settings.max_iterations,
                "convergence_tol": local_settings.convergence_tol,
                "min_lambda_gap": local_settings.min_lambda_gap,
                "endpoint_policy": local_settings.endpoint_policy,
            },
            "spf": {
                "gamma": spf_settings.gamma,
                "dmin_anchor_low": list(spf_settings.dmin_anchor_low),
                "dmin_anchor_high": list(spf_settings.dmin_anchor_high),
            },
        },
        "trace": run.trace,
        "n_evaluations": run.n_evaluations,
        "n_generations": run.n_generations,
    }


def cmd_optimize(args) -> int:
    cfg = _merge_config(args)
    model, mep_cfg, spf_settings, local_settings, search_settings = _build_settings(cfg)
    nfe = cfg["nfe"]
    try:
        run = optimize(model, mep_cfg, spf_settings, local_settings, search_settings, nfe)
    except AllCandidatesInfeasibleError as exc:
        print(f"search failed: {exc}", file=sys.stderr)
        return EXIT_SEARCH_FAILED
    payload = _export_payload(run, model, mep_cfg, spf_settings, local_settings, cfg)
    indices_text = "\n".join(str(i) for i in payload["indices"]) + "\n"

    out = cfg.get("out")
    if out:
        out_path = Path(out)
        if cfg["format"] == "list":
            out_path.write_text(indices_text)
        else:
            out_path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")
            out_path.with_suffix(".steps.txt").write_text(indices_text)
    psi = run.psi_star
    print(
        f"psi*: rho={psi.rho:.6g} t_eps={psi.t_eps:.6g} t_max={psi.t_max:.6g}\n"
        f"fitness: total={run.report.total:.9g} (objective={run.report.j_mep:.9g}, "
        f"penalty={run.report.penalty:.3g}, gamma={run.report.gamma:g})\n"
        f"min time gap: {run.report.min_gap_t:.6g} (required {run.report.d_min_used:.6g})\n"
        f"steps: {payload['indices']} terminal_time={payload['terminal_time']:.6g}\n"
        f"wall time: {run.wall_time:.2f} s over {run.n_generations} generations "
        f"({run.n_evaluations} evaluations)"
    )
    return EXIT_OK


def _load_schedule_file(path: str, model: NoiseScheduleModel) -> tuple[Schedule, int | None, dict]:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read schedule file {path!r}: {exc}") from exc
    if not isinstance(doc, dict) or "times" not in doc:
        raise ConfigError(f"{path!r}: expected a JSON object with a 'times' array")
    times = np.asarray(doc["times"], dtype=float)
    if times.ndim != 1 or times.size < 2:
        raise ConfigError(f"{path!r}: 'times' must hold at least two values")
    if np.any(np.diff(times) > 0):
        raise ConfigError(f"{path!r}: 'times' must be non-increasing")
    if "lambdas" in doc:
        sched = Schedule(np.asarray(doc["lambdas"], dtype=float), times)
    else:
        sched = Schedule.from_times(model, times)
    return sched, doc.get("nfe"), doc


def cmd_evaluate(args) -> int:
    cfg = _merge_config(args)
    model, mep_cfg, spf_settings, _, _ = _build_settings(cfg)
    sched, file_nfe, _ = _load_schedule_file(args.schedule, model)
    nfe = args.nfe if args.nfe is not None else (file_nfe if file_nfe is not None else sched.nfe)
    objective = j_mep(mep_cfg, sched)
    pen = penalty(spf_settings, sched.times, nfe)
    total = objective + spf_settings.gamma * pen
    print(
        f"j_mep: {objective!r}\n"
        f"penalty: {pen!r} (d_min={d_min(spf_settings, nfe)!r} at nfe={nfe})\n"
        f"total: {total!r} (gamma={spf_settings.gamma:g})\n"
        f"min time gap: {sched.min_time_gap()!r}"
    )
    return EXIT_OK


_FAMILIES = ("optimized", "uniform-t", "uniform-lambda", "edm-rho7")


def cmd_compare(args) -> int:
    cfg = _merge_config(args)
    model, mep_cfg, spf_settings, local_settings, search_settings = _build_settings(cfg)
    nfe = cfg["nfe"]
    families = [f for f in (args.families or ",".join(_FAMILIES)).split(",") if f]
    if not families:
        print("no schedule families requested", file=sys.stderr)
        return EXIT_USAGE
    unknown = [f for f in families if f not in _FAMILIES]
    if unknown:
        print(f"unknown families {unknown}; choose from {list(_FAMILIES)}", file=sys.stderr)
        return EXIT_USAGE

    try:
        run = optimize(model, mep_cfg, spf_settings, local_settings, search_settings, nfe)
    except AllCandidatesInfeasibleError as exc:
        print(f"search failed: {exc}", file=sys.stderr)
        return EXIT_SEARCH_FAILED
    # baselines default to the model's full sampling range (the grids real
    # samplers ship with); "matched" pins them to the optimizer's endpoints
    # so every row shares one dense reference.
    if args.baseline_range == "matched":
        t_eps, t_max = run.psi_star.t_eps, run.psi_star.t_max
    else:
        t_eps, t_max = model.t_domain

    builders = {
        "optimized": lambda: run.schedule_star,
        "uniform-t": lambda: uniform_time_schedule(model, t_eps, t_max, nfe),
        "uniform-lambda": lambda: uniform_lambda_schedule(model, t_eps, t_max, nfe),
        "edm-rho7": lambda: edm_schedule(model, t_eps, t_max, nfe),
    }
    schedules = [(name, builders[name]()) for name in families]

    data = GaussianDataModel(mean=np.zeros(args.dim), stdev=args.data_std, dim=args.dim)
    rows = compare_schedules(
        data, model, schedules, nfe, n_seeds=args.seeds, base_seed=cfg["seed"],
        variant=args.variant, reference_nfe=max(1000, 4 * nfe),
    )
    by_name = {row.name: row for row in rows}
    print(f"model={model.kind} nfe={nfe} seeds={args.seeds} dim={args.dim} "
          f"stdev={args.data_std:g} step-rule={args.variant} "
          f"baseline-range={args.baseline_range}")
    print(f"{'family':<16}{'j_mep':>14}{'min_gap_t':>12}{'error_mean':>14}{'error_std':>12}")
    for name, sched in schedules:
        row = by_name[name]
        print(
            f"{name:<16}{j_mep(mep_cfg, sched):>14.6g}{sched.min_time_gap():>12.4g}"
            f"{row.mean_error:>14.6g}{row.std_error:>12.4g}"
        )
    return EXIT_OK


def cmd_validate(args) -> int:
    ok = True

    def f(lam):
        return np.tanh(lam / 4.0)

    widths = [0.5, 0.25, 0.125, 0.0625]
    residuals = [hybrid_midpoint_residual(f, 1 - h / 2, 1 + h / 2) for h in widths]
    ratios = [abs(residuals[i] / residuals[i + 1]) for i in range(len(residuals) - 1)]
    order_ok = all(6.0 <= r <= 10.0 for r in ratios)
    ok &= order_ok
    print(f"[{'PASS' if order_ok else 'FAIL'}] third-order residual decay: "
          f"halving ratios {[round(r, 3) for r in ratios]} (expected within [6, 10])")

    def g(lam):
        return 1.0 + 0.01 * lam

    def g_shift(lam):
        return g(lam) + 100.0

    hybrid = hybrid_midpoint_residual(g, 4.0, 6.0)
    hybrid_shifted = hybrid_midpoint_residual(g_shift, 4.0, 6.0)
    shift_delta = abs(hybrid_shifted - hybrid)
    shift_ok = shift_delta <= 1e-11
    ok &= shift_ok
    print(f"[{'PASS' if shift_ok else 'FAIL'}] hybrid residual shift invariance: "
          f"|delta| = {shift_delta:.3g} under f -> f + 100 (tolerance 1e-11)")

    standard = standard_midpoint_residual(g, 4.0, 6.0)
    standard_shifted = standard_midpoint_residual(g_shift, 4.0, 6.0)
    contrast_ok = abs(hybrid) < abs(standard) and abs(standard_shifted - standard) > 1.0
    ok &= contrast_ok
    print(f"[{'PASS' if contrast_ok else 'FAIL'}] stability contrast: |hybrid| = {abs(hybrid):.3g} "
          f"< |standard| = {abs(standard):.3g}; standard shifts by {abs(standard_shifted - standard):.3g}")

    # informational: objective vs dense quadrature of the proxy integrand
    cfg = _merge_config(args)
    model, mep_cfg, _, _, _ = _build_settings(cfg)
    sched = uniform_lambda_schedule(model, t_eps=0.02, t_max=0.98, nfe=8)
    dense = sum(
        quadrature_reference(
            lambda lam: float(mep_cfg.model.error_proxy_lambda(lam, mep_cfg.p)),
            float(a), float(b),
        )
        for a, b in zip(sched.lambdas[:-1], sched.lambdas[1:])
    )
    objective = j_mep(mep_cfg, sched)
    print(f"[info] objective vs integral proxy on a uniform-log-SNR schedule "
          f"({model.kind}, nfe=8): {objective:.9g} vs {dense:.9g} "
          f"(relative gap {abs(objective - dense) / abs(dense):.2e})")

    return EXIT_OK if ok else EXIT_USAGE


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="schedopt", description="Diffusion sampling-schedule optimizer")
    parser.add_argument("--version", action="version", version=f"schedopt {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--config", help="flat key=value configuration file")
        for key, (caster, help_text) in _OPTIONS.items():
            if key == "out":
                p.add_argument("--out", help=help_text)
            elif caster in (str, int, float):
                p.add_argument(f"--{key}", type=caster, help=help_text)
            else:
                p.add_argument(f"--{key}", type=caster, help=help_text)

    p_opt = sub.add_parser("optimize", help="search for an optimized schedule and export it")
    add_common(p_opt)
    p_opt.set_defaults(func=cmd_optimize)

    p_eval = sub.add_parser("evaluate", help="score a schedule file (objective, penalty, total)")
    p_eval.add_argument("schedule", help="JSON file with a 'times' array (an export works)")
    add_common(p_eval)
    p_eval.set_defaults(func=cmd_evaluate)

    p_cmp = sub.add_parser("compare", help="compare schedule families on the analytic lab")
    add_common(p_cmp)
    p_cmp.add_argument("--families", help=f"comma list from {list(_FAMILIES)}")
    p_cmp.add_argument("--seeds", type=int, default=64, help="number of paired seeds")
    p_cmp.add_argument("--dim", type=int, default=2, help="data dimension")
    p_cmp.add_argument("--data-std", type=float, default=1.0, help="data standard deviation")
    p_cmp.add_argument("--variant", choices=["hybrid-midpoint", "first-order"],
                       default="hybrid-midpoint", help="sampler step rule")
    p_cmp.add_argument("--baseline-range", choices=["full", "matched"], default="full",
                       help="baseline endpoints: full model range or matched to the optimizer")
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="run the approximation-order and stability diagnostics")
    add_common(p_val)
    p_val.set_defaults(func=cmd_validate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
