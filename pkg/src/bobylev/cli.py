"""Command-line entry point: ``bobylev <command> --config FILE --out DIR [--seed N]``.

Each command merges the JSON config over its defaults, validates it, runs
one experiment, and writes CSV files (with config sidecars) and a
``summary.json`` into the output directory. Exit codes: 0 all checks
passed, 1 a check failed (listed in ``failures.json``), 2 invalid config,
3 numerical divergence.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from . import charfun as C
from . import collision as Col
from . import kernels as K
from . import levy
from . import solver as S
from .config import DEFAULT_SEED, ConfigError, tolerances, validate
from .io import write_csv, write_json

ENV_OUT = "BOBYLEV_OUT"
DEFAULT_OUT = "bobylev_out"

_W1 = {"preset": "w_p", "p": 1.0, "t0": 1.0}
_CONST = {"family": "constant", "kappa_or_c": 1.0}
_SINGULAR = {"family": "maxwellian_singular", "kappa_or_c": 1.0}

DEFAULTS: dict[str, dict] = {
    "constants": {"kernel": _CONST, "alphas": [0.5, 1.0, 1.5, 2.0]},
    "levy": {"p": 1.0, "t": 1.0, "v_max": 50.0, "n_v": 20},
    "collide": {"kernel": _SINGULAR, "alpha": 1.0, "initial": _W1,
                "r_samples": [2.0**k for k in range(-4, 5)]},
    "evolve": {"p": 1.0, "delta_p": 1.0, "alpha": 1.0, "kernel": _CONST, "scheme": "exp_heun",
               "dt": 0.02, "T_final": 1.0, "n_outputs": 10, "initial": _W1},
    "stability": {"p": 1.0, "delta_p": 1.0, "alpha": 1.0, "kernel": _CONST, "dt": 0.01, "T_final": 2.0,
                  "grid": {"r_min": 1e-8, "n_log": 384},
                  "n_outputs": 20, "initial": _W1, "initial_other": {"preset": "w_p", "p": 1.0, "t0": 1.2}},
    "continuation": {"p": 1.5, "delta_p": 1.0, "alpha": 1.5, "kernel": _SINGULAR, "dt": 0.01, "T_final": 0.5,
                     "n_outputs": 2, "truncation_sequence": [4, 8, 16, 32], "initial": _W1},
    "nonexist": {"p": 1.0, "alpha": 1.5, "delta_p": 1.0, "t": 1.0,
                 "r_min_sequence": [10.0**-k for k in range(1, 7)]},
}

#: members of ``verify-all``: (subdirectory, command, overrides)
SUITE: list[tuple[str, str, dict]] = [
    ("constants", "constants", {}),
    ("constants_singular", "constants", {"kernel": _SINGULAR, "alphas": [0.6, 1.0, 1.5, 2.0]}),
    ("levy", "levy", {}),
    ("levy_gauss", "levy", {"p": 2.0, "v_max": 10.0}),
    ("collide", "collide", {}),
    ("evolve", "evolve", {}),
    ("evolve_p2", "evolve", {"p": 2.0}),
    ("evolve_picard", "evolve", {"scheme": "picard", "delta_p": 0.0, "T_final": 0.2, "n_outputs": 2}),
    ("stability", "stability", {}),
    ("continuation", "continuation", {}),
    ("nonexist", "nonexist", {}),
    ("nonexist_critical", "nonexist", {"alpha": 1.0}),
]


@dataclass
class Context:
    out: Path
    seed: int
    workers: int
    tol: dict
    config: dict
    failures: list = field(default_factory=list)

    def check(self, name: str, passed: bool, **detail) -> bool:
        if not passed:
            self.failures.append({"check": name, **detail})
        return bool(passed)


# ---------------------------------------------------------------------------
# config to objects

def build_kernel(cfg: dict) -> K.KernelModel:
    return K.KernelModel.from_dict(cfg["kernel"])


def build_grid(cfg: dict) -> C.RadialGrid:
    return C.RadialGrid.log_spaced(**cfg.get("grid", {}))


def build_initial(spec: dict, grid: C.RadialGrid, envelope_power: float = 0.0) -> C.RadialCharFn:
    if "file" in spec:
        try:
            with open(spec["file"]) as fh:
                rows = [line.split(",") for line in fh.read().splitlines()[1:] if line.strip()]
            r = np.array([float(a) for a, _ in rows])
            phi = np.array([float(b) for _, b in rows])
            src = C.RadialCharFn(C.RadialGrid(r), phi, envelope_power=envelope_power)
        except (OSError, ValueError) as exc:
            raise ConfigError(f"cannot read initial datum {spec['file']!r}: {exc}", "initial.file") from exc
        val, dev = src.evaluate(grid.nodes)
        return C.RadialCharFn(grid, val, deviation=dev, envelope_power=envelope_power)
    preset = spec.get("preset", "w_p")
    if preset == "w_p":
        return C.stable_charfn(grid, spec.get("p", 1.0), spec.get("t0", 1.0), envelope_power)
    if preset == "gaussian":
        return C.gaussian_charfn(grid, spec.get("c", 0.5), envelope_power)
    if preset == "mixture":
        comps = [tuple(c) for c in spec.get("components", [])]
        if not comps:
            raise ConfigError("mixture preset needs components [[weight, p, t0], ...]", "initial.components")
        return C.mixture_charfn(grid, comps, envelope_power)
    return C.unit_charfn(grid)


def build_solver_config(cfg: dict, tol: dict) -> S.SolverConfig:
    quad = Col.QuadratureSpec(**cfg.get("quadrature", {}))
    try:
        return S.SolverConfig(
            p=cfg["p"], delta_p=cfg["delta_p"], alpha=cfg["alpha"], kernel=build_kernel(cfg),
            grid=build_grid(cfg), dt=cfg["dt"], scheme=cfg.get("scheme", "exp_heun"), T_final=cfg["T_final"],
            truncation_sequence=tuple(cfg.get("truncation_sequence", ())), quadrature=quad,
            adaptive=cfg.get("adaptive", True), tol=tol)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc


def _outputs(cfg: dict) -> list[float]:
    n = cfg.get("n_outputs", 10)
    return [cfg["T_final"] * k / n for k in range(1, n + 1)]


def _key(alpha: float) -> str:
    return format(alpha, "g")


# ---------------------------------------------------------------------------
# commands

def cmd_constants(ctx: Context) -> dict:
    cfg = ctx.config
    model = build_kernel(cfg)
    alphas = cfg.get("alphas", [0.5, 1.0, 1.5, 2.0])
    table = [K.MomentConstants.of(model, a).as_dict() for a in alphas]
    write_csv(ctx.out / "constants.csv", table, cfg)
    b1 = K.l1_norm(model)
    summary: dict = {"b_l1": b1}
    for row in table:
        k = _key(row["alpha"])
        summary.update({f"lambda_{k}": row["lambda_alpha"], f"gamma_{k}": row["gamma_alpha"],
                        f"mu_{k}": row["mu_alpha"]})
        for name in ("mu_alpha", "lambda_alpha"):
            if math.isfinite(row[name]):
                ctx.check(f"{name}_nonnegative", row[name] >= -ctx.tol["inequality"], alpha=row["alpha"])
    if 2.0 in alphas and math.isfinite(b1):
        ctx.check("lambda_2_zero", abs(K.moment_lambda_alpha(model, 2.0)) <= ctx.tol["lambda_2"])
        g2 = K.moment_gamma_alpha(model, 2.0)
        ctx.check("gamma_2_equals_l1", abs(g2 - b1) <= ctx.tol["gamma_2"] * max(1.0, b1), gamma_2=g2, b_l1=b1)
        slack = ctx.tol["gamma_2"] * max(1.0, b1)
        for row in table:
            ok = g2 - slack <= row["gamma_alpha"] <= 2 * g2 + slack
            ctx.check("gamma_alpha_between", ok, alpha=row["alpha"], gamma_alpha=row["gamma_alpha"])
    return summary


def cmd_levy(ctx: Context) -> dict:
    cfg = ctx.config
    params = levy.LevyParams(cfg["p"], cfg.get("t", 1.0))
    v = np.linspace(0.0, cfg.get("v_max", 50.0), cfg.get("n_v", 20))
    f = np.atleast_1d(levy.f_p_density(v, params))
    rows = [{"v": float(a), "density": float(b)} for a, b in zip(v, f)]
    l1 = levy.wp_l1_norm(params)
    l1_exact = levy.wp_l1_norm_closed_form(params)
    summary = {"p": params.p, "t": params.t, "density_at_origin": levy.density_at_origin(params),
               "l1_norm": l1, "l1_closed_form": l1_exact}
    ctx.check("l1_identity", abs(l1 - l1_exact) <= ctx.tol["levy_l1"] * l1_exact, l1=l1, exact=l1_exact)
    if params.p < 2.0:
        fit = levy.fit_tail_constant(params)
        exact = levy.tail_constant(params)
        summary.update({"tail_constant": exact, "tail_constant_fit": fit.constant})
        ctx.check("tail_constant", abs(fit.constant - exact) <= ctx.tol["tail_fit"] * exact,
                  fit=fit.constant, exact=exact)
    else:
        closed = (4 * math.pi * params.t) ** -1.5 * np.exp(-v**2 / (4 * params.t))
        err = float(np.max(np.abs(f - closed)))
        summary["closed_form_error"] = err
        ctx.check("gaussian_closed_form", err <= ctx.tol["density_closed_form"], error=err)
        for row, c in zip(rows, closed):
            row["closed_form"] = float(c)
    write_csv(ctx.out / "density.csv", rows, cfg)
    return summary


def cmd_collide(ctx: Context) -> dict:
    cfg = ctx.config
    model = build_kernel(cfg)
    grid = build_grid(cfg)
    phi = build_initial(cfg.get("initial", _W1), grid)
    spec = Col.QuadratureSpec(**cfg.get("quadrature", {}))
    alpha = cfg["alpha"]
    reports = Col.verify_operator_bound(phi, model, alpha, cfg["r_samples"], spec, ctx.tol["inequality"])
    if any(not math.isfinite(rep.lhs) for rep in reports):
        raise S.DivergenceError("collision operator diverged at a sample radius")
    rows = [{"r": rep.location[0], "B_abs": rep.lhs, "bound": rep.rhs, "pass": rep.passed} for rep in reports]
    write_csv(ctx.out / "collision.csv", rows, cfg)
    for rep in reports:
        ctx.check("operator_bound", rep.passed, r=rep.location[0], lhs=rep.lhs, rhs=rep.rhs)
    return {"max_ratio": max(rep.lhs / rep.rhs for rep in reports if rep.rhs > 0),
            "mu_alpha": K.moment_mu_alpha(model, alpha), "norm": C.kalpha_norm(phi, alpha)}


def _picard_trajectory(phi0, config: S.SolverConfig) -> S.Trajectory:
    gamma2 = K.l1_norm(config.kernel)
    limit = math.log(2.0) / gamma2 if gamma2 > 0 else math.inf
    windows = max(1, math.ceil(config.T_final / (0.9 * limit))) if math.isfinite(limit) else 1
    res = S.picard_solve(phi0, config, T0=config.T_final / windows, windows=windows)
    return res.trajectory


def cmd_evolve(ctx: Context) -> dict:
    cfg = ctx.config
    config = build_solver_config(cfg, ctx.tol)
    phi0 = build_initial(cfg.get("initial", _W1), config.grid, config.p)
    if config.scheme == "picard":
        traj = _picard_trajectory(phi0, config)
    else:
        traj = S.evolve(phi0, config, _outputs(cfg))
    report = S.diagnostics(traj, seed=ctx.seed)
    write_csv(ctx.out / "trajectory.csv", traj.rows(), cfg, ["t", "r", "phi"])
    write_csv(ctx.out / "diagnostics.csv", report.rows, cfg)
    flags = {}
    for check in ("growth", "envelope", "time_modulus", "psd"):
        rows = report.select(check)
        flags[check] = all(r["pass"] for r in rows)
        ctx.check(check, flags[check], failures=sum(not r["pass"] for r in rows))
    return {"final_margins": [r["lhs"] for r in report.select("growth")],
            "envelope_ratios": [r["lhs"] / r["rhs"] if r["rhs"] > 0 else 0.0 for r in report.select("envelope")],
            "pass_flags": flags, "rejected_steps": traj.rejected}


def cmd_stability(ctx: Context) -> dict:
    cfg = ctx.config
    config = build_solver_config(cfg, ctx.tol)
    phi0 = build_initial(cfg.get("initial", _W1), config.grid, config.p)
    psi0 = build_initial(cfg.get("initial_other", cfg.get("initial", _W1)), config.grid, config.p)
    res = S.stability_experiment(phi0, psi0, config, _outputs(cfg), workers=ctx.workers)
    write_csv(ctx.out / "stability.csv", res.rows(), cfg)
    for row in res.rows():
        ctx.check("stability", row["pass"], t=row["t"], lhs=row["lhs"], rhs=row["rhs"])
    ratios = [a / b for a, b in zip(res.lhs, res.rhs) if b > 0]
    return {"lambda_alpha": res.lambda_alpha, "d0": res.d0, "max_ratio": max(ratios, default=0.0),
            "pass": res.passed}


def cmd_continuation(ctx: Context) -> dict:
    cfg = ctx.config
    config = build_solver_config(cfg, ctx.tol)
    phi0 = build_initial(cfg.get("initial", _W1), config.grid, config.p)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", S.NonCauchyWarning)
        res = S.cutoff_continuation(phi0, config, _outputs(cfg), workers=ctx.workers)
    write_csv(ctx.out / "cauchy.csv", res.rows(), cfg, ["n", "exponent", "lambda_alpha", "difference_to_next"])
    r = config.grid.nodes
    limit_rows = [{"t": float(t), "r": float(ri), "phi_minus_one": float(d)}
                  for t, dev in zip(res.trajectories[-1].times, res.limit) for ri, d in zip(r, dev)]
    write_csv(ctx.out / "limit.csv", limit_rows, cfg)
    ctx.check("cauchy_decrease", res.cauchy, differences=res.differences)
    exps = res.exponents
    ctx.check("exponents_increase", all(b >= a for a, b in zip(exps[:-1], exps[1:])), exponents=exps)
    lam = res.lambda_alpha
    if math.isfinite(lam) and lam > 0:
        gap = abs(lam - exps[-1]) / lam
        ctx.check("exponent_limit", gap <= ctx.tol["continuation_exponent"], relative_gap=gap)
    return {"differences": res.differences, "ratios": res.ratios, "exponents": exps, "lambda_alpha": lam,
            "rejected_steps": [t.rejected for t in res.trajectories]}


def cmd_nonexist(ctx: Context) -> dict:
    cfg = ctx.config
    p, alpha, delta, t = cfg["p"], cfg["alpha"], cfg["delta_p"], cfg["t"]
    res = S.nonexistence_probe(p, alpha, delta, t, cfg["r_min_sequence"])
    write_csv(ctx.out / "nonexist.csv", res.rows(), cfg)
    if alpha > p:
        rel = abs(res.slope - res.expected_slope) / abs(res.expected_slope)
        ctx.check("slope", rel <= ctx.tol["slope_rel"], slope=res.slope, expected=res.expected_slope)
    elif alpha == p:
        err = abs(res.sups[-1] - delta * t)
        ctx.check("critical_sup", err <= ctx.tol["norm_identity"], sup=res.sups[-1], expected=delta * t)
    else:
        bound = (delta * t) ** (alpha / p)
        ctx.check("subcritical_sup", max(res.sups) <= bound * (1 + ctx.tol["inequality"]), bound=bound)
    return {"slope": res.slope, "expected_slope": res.expected_slope, "sups": res.sups}


COMMANDS: dict[str, Callable[[Context], dict]] = {
    "constants": cmd_constants,
    "levy": cmd_levy,
    "collide": cmd_collide,
    "evolve": cmd_evolve,
    "stability": cmd_stability,
    "continuation": cmd_continuation,
    "nonexist": cmd_nonexist,
}


# ---------------------------------------------------------------------------
# driver

_NUMERICAL = (S.DivergenceError, S.ContractionError, levy.QuadratureToleranceError, Col.NonCutoffError,
              C.TailError)


def prepare(command: str, user_cfg: dict) -> dict:
    validate(user_cfg)
    cfg = {**DEFAULTS[command], **user_cfg}
    return validate(cfg)


def run_command(command: str, user_cfg: dict, out: Path, seed: int, workers: int = 1) -> tuple[int, list]:
    """Run one experiment; returns ``(exit_code, failures)``."""
    cfg = prepare(command, user_cfg)
    tol = tolerances(cfg.get("tolerances"))
    ctx = Context(Path(out), seed, cfg.get("workers", workers), tol, cfg)
    ctx.out.mkdir(parents=True, exist_ok=True)
    (ctx.out / "failures.json").unlink(missing_ok=True)
    try:
        summary = COMMANDS[command](ctx)
    except _NUMERICAL as exc:
        ctx.failures.append({"check": "numerical", "error": type(exc).__name__, "message": str(exc)})
        write_json(ctx.out / "failures.json", ctx.failures)
        return 3, ctx.failures
    summary["passed"] = not ctx.failures
    write_json(ctx.out / "summary.json", {"command": command, "seed": seed, "summary": summary})
    if ctx.failures:
        write_json(ctx.out / "failures.json", ctx.failures)
        return 1, ctx.failures
    return 0, []


def run_suite(out: Path, seed: int, workers: int = 1, overrides: Optional[dict] = None) -> tuple[int, list]:
    """The default acceptance suite; exit code is the worst member's."""
    code, failures, rows = 0, [], []
    (Path(out) / "failures.json").unlink(missing_ok=True)
    for name, command, cfg in SUITE:
        merged = {**cfg, **(overrides or {}).get(name, {})}
        status, fails = run_command(command, merged, Path(out) / name, seed, workers)
        rows.append({"member": name, "command": command, "status": status})
        failures += [{"member": name, **f} for f in fails]
        code = max(code, status)
    write_csv(Path(out) / "suite.csv", rows, {"seed": seed})
    if failures:
        write_json(Path(out) / "failures.json", failures)
    return code, failures


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bobylev", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS) + ["verify-all"])
    parser.add_argument("--config", type=Path, help="JSON run configuration")
    parser.add_argument("--out", type=Path, help=f"output directory (default ${ENV_OUT} or ./{DEFAULT_OUT})")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED)
    parser.add_argument("--workers", type=int, default=1, help="threads for independent runs")
    return parser


def main(argv: Optional[list[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    out = args.out or Path(os.environ.get(ENV_OUT, DEFAULT_OUT))
    try:
        user_cfg = json.loads(args.config.read_text()) if args.config else {}
        if not isinstance(user_cfg, dict):
            raise ConfigError("config must be a JSON object", "<root>")
        if args.command == "verify-all":
            code, failures = run_suite(out, args.seed, args.workers, user_cfg.get("overrides"))
        else:
            code, failures = run_command(args.command, user_cfg, out, args.seed, args.workers)
    except json.JSONDecodeError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    for f in failures:
        print(json.dumps(f, sort_keys=True, default=str), file=sys.stderr)
    print(f"{args.command}: {'pass' if code == 0 else 'FAIL'} (exit {code}) -> {out}")
    return code


if __name__ == "__main__":
    sys.exit(main())
