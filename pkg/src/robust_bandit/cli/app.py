"""
Command-line front end.

Usage:
    robust-bandit cutoff --r 0.2 --theta-low 0 --theta-high 1 --sigma 0.4 --delta 0.9 --alpha 0.14
    robust-bandit value --preset fig-surplus --out surplus.csv
    robust-bandit sweep --preset fig-cutoffs --out cutoffs.csv
    robust-bandit verify --preset fig-surplus --grid 999
    robust-bandit simulate --preset fig-surplus --p0 0.6 --paths 10000
    robust-bandit two-period --p1 0.5 --discount 1

Model primitives are layered: preset, then --params FILE, then individual
flags. Numerical defaults come from Settings (ROBUST_BANDIT_* variables).

Exit status: 0 when every check passed, 1 when a check failed, 2 on invalid
input or a solver failure.
"""
import argparse
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from robust_bandit import __version__
from robust_bandit.analysis.belief_sim import (
    SimConfig,
    martingale_check,
    payoff_consistent,
    simulate_equilibrium,
)
from robust_bandit.analysis.expert_info import (
    derive_expert_closed_form,
    expert_value_function,
    surplus_argmax,
)
from robust_bandit.analysis.hjb_solver import ConvergenceError, check_against_closed_form
from robust_bandit.analysis.model_core import as_belief, derive_closed_form, value_function
from robust_bandit.analysis.two_period import (
    METHODS,
    TwoPeriodConfig,
    solve_two_period,
    value_profile,
)
from robust_bandit.cli.output import RunManifest, write_document, write_table
from robust_bandit.config import Settings, get_settings
from robust_bandit.models.params import ModelParams, validate_params

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CHECK_FAILED = 1
EXIT_ERROR = 2

# Tolerance on comparisons that should hold exactly up to round-off.
_ROUNDOFF = 1e-10

_CAPTION_PARAMS = {
    "r": 0.2,
    "theta_low": 0.0,
    "theta_high": 1.0,
    "sigma": 0.4,
    "delta": 0.9,
    "alpha": 0.14,
    "gamma": 0.3,
}

PRESETS: Dict[str, Dict[str, Any]] = {
    "fig-cutoffs": {
        "params": dict(_CAPTION_PARAMS),
        "options": {"variable": "alpha", "start": 0.08, "stop": 0.5, "steps": 100},
    },
    "fig-surplus": {
        "params": dict(_CAPTION_PARAMS),
        "options": {"grid": 1001},
    },
}

_MODEL_FLAGS = ("r", "theta_low", "theta_high", "sigma", "delta", "alpha", "gamma")

# payload for JSON, optional (columns, rows) for CSV
Report = Tuple[Dict[str, Any], Optional[Tuple[List[str], List[Sequence[Any]]]]]


# ─── Parameter intake ────────────────────────────────────────────────────────

def _preset(args: argparse.Namespace) -> Dict[str, Any]:
    return PRESETS[args.preset] if getattr(args, "preset", None) else {"params": {}, "options": {}}


def resolve_params(args: argparse.Namespace) -> ModelParams:
    """Preset values, overridden by --params FILE, overridden by flags."""
    raw: Dict[str, Any] = dict(_preset(args)["params"])
    if args.params:
        with open(args.params, encoding="utf-8") as fh:
            loaded = json.load(fh)
        if not isinstance(loaded, dict):
            raise ValueError(f"{args.params}: expected a JSON object of parameters")
        raw.update(loaded)
    for name in _MODEL_FLAGS:
        value = getattr(args, name)
        if value is not None:
            raw[name] = value
    return validate_params(raw)


def _option(args: argparse.Namespace, name: str, default: Any) -> Any:
    value = getattr(args, name, None)
    if value is not None:
        return value
    return _preset(args)["options"].get(name, default)


# ─── Subcommands ─────────────────────────────────────────────────────────────

def cmd_cutoff(args: argparse.Namespace, settings: Settings, manifest: RunManifest) -> Report:
    params = resolve_params(args)
    manifest.params = params.model_dump()
    cf = derive_closed_form(params)
    payload: Dict[str, Any] = {
        "eta": cf.eta,
        "lam": cf.lam,
        "p_bar": cf.p_bar,
        "ambiguity_cost": cf.ambiguity_cost,
        "explores": cf.explores,
    }
    if not cf.explores:
        manifest.notes.append("eta >= 1: the ambiguous arm is never explored")
    if params.has_expert:
        ecf = derive_expert_closed_form(params)
        payload.update({
            "lambda1": ecf.lambda1,
            "lambda2": ecf.lambda2,
            "big_lambda": ecf.big_lambda,
            "p_tilde": ecf.p_tilde,
            "c1": ecf.c1,
            "c2": ecf.c2,
            "outside_derivation": ecf.outside_derivation,
            "surplus_argmax": surplus_argmax(params, settings.surplus_grid),
        })
        manifest.checks["p_tilde_ge_p_bar"] = ecf.p_tilde >= cf.p_bar - _ROUNDOFF
    return payload, None


def _beliefs(args: argparse.Namespace) -> np.ndarray:
    if args.p:
        return as_belief(np.asarray(args.p, dtype=float))
    n = int(_option(args, "grid", 1001))
    if n < 2:
        raise ValueError(f"--grid must be at least 2 for a value table, got {n}")
    return np.linspace(0.0, 1.0, n)


def cmd_value(args: argparse.Namespace, settings: Settings, manifest: RunManifest) -> Report:
    params = resolve_params(args)
    manifest.params = params.model_dump()
    beliefs = _beliefs(args)
    manifest.options["beliefs"] = len(beliefs)
    cf = derive_closed_form(params)
    values = value_function(params, cf, beliefs)
    columns = ["p", "v"]
    cells: List[np.ndarray] = [beliefs, values]
    payload: Dict[str, Any] = {"p_bar": cf.p_bar}
    if params.has_expert:
        ecf = derive_expert_closed_form(params)
        expert = expert_value_function(params, ecf, beliefs)
        gap = expert - values
        columns += ["v_tilde", "surplus"]
        cells += [expert, gap]
        payload["p_tilde"] = ecf.p_tilde
        manifest.checks["surplus_nonnegative"] = bool(np.all(gap >= -_ROUNDOFF))
    rows = [list(row) for row in zip(*cells)]
    payload["rows"] = [dict(zip(columns, row)) for row in rows]
    return payload, (columns, rows)


SWEEP_VARIABLES = ("alpha", "sigma", "gamma", "delta")


def cmd_sweep(args: argparse.Namespace, settings: Settings, manifest: RunManifest) -> Report:
    params = resolve_params(args)
    manifest.params = params.model_dump()
    variable = _option(args, "variable", "alpha")
    start = _option(args, "start", None)
    stop = _option(args, "stop", None)
    steps = int(_option(args, "steps", 100))
    if start is None or stop is None:
        raise ValueError("sweep needs --start and --stop (or a preset that sets them)")
    if steps < 2:
        raise ValueError(f"--steps must be at least 2, got {steps}")
    manifest.options.update({"variable": variable, "start": start, "stop": stop, "steps": steps})

    values = np.linspace(start, stop, steps)
    columns = [variable, "eta", "lam", "p_bar", "clamped"]
    expert = params.has_expert or variable == "gamma"
    if expert:
        columns.append("p_tilde")
    rows: List[List[Any]] = []
    lams, bars, tildes, clamped = [], [], [], []
    for value in values:
        point = params.replace(**{variable: float(value)})
        cf = derive_closed_form(point)
        is_clamped = not 0.0 < cf.p_bar < 1.0
        row: List[Any] = [float(value), cf.eta, cf.lam, cf.p_bar, is_clamped]
        if expert:
            ecf = derive_expert_closed_form(point)
            row.append(ecf.p_tilde)
            tildes.append(ecf.p_tilde)
        rows.append(row)
        lams.append(cf.lam)
        bars.append(cf.p_bar)
        clamped.append(is_clamped)

    if any(clamped):
        hit = [float(v) for v, c in zip(values, clamped) if c]
        manifest.notes.append(f"{len(hit)} rows clamped at a boundary cutoff, {variable} in "
                              f"[{min(hit)!r}, {max(hit)!r}]")
        logger.warning("%d of %d sweep rows clamped", len(hit), steps)

    order = np.argsort(values)
    bars_sorted = np.asarray(bars)[order]
    if variable == "alpha":
        free = ~np.asarray(clamped)[order]
        diffs = np.diff(bars_sorted)
        both_free = free[1:] & free[:-1]
        manifest.checks["p_bar_decreasing_in_alpha"] = bool(
            np.all(diffs <= _ROUNDOFF) and np.all(diffs[both_free] < 0.0)
        )
    if variable == "delta":
        manifest.checks["lam_increasing_in_delta"] = bool(
            np.all(np.diff(np.asarray(lams)[order]) > 0.0)
        )
    if tildes:
        manifest.checks["p_tilde_ge_p_bar"] = bool(
            np.all(np.asarray(tildes) >= np.asarray(bars) - _ROUNDOFF)
        )

    payload = {"rows": [dict(zip(columns, row)) for row in rows]}
    return payload, (columns, rows)


def cmd_verify(args: argparse.Namespace, settings: Settings, manifest: RunManifest) -> Report:
    params = resolve_params(args)
    manifest.params = params.model_dump()
    n = int(args.grid if args.grid is not None else settings.grid_size)
    tol = args.tol if args.tol is not None else settings.solver_tol
    max_iter = args.max_iter if args.max_iter is not None else settings.solver_max_iter
    manifest.options.update({"grid": n, "tol": tol, "max_iter": max_iter,
                             "error_tol": args.error_tol, "convergence": args.convergence})

    variants = [("baseline", False)] + ([("expert", True)] if params.has_expert else [])
    results: Dict[str, Any] = {}
    for name, expert in variants:
        check = check_against_closed_form(params, n, expert, tol, max_iter)
        entry: Dict[str, Any] = {"grid": asdict(check)}
        manifest.checks[f"{name}_max_error"] = check.max_error <= args.error_tol
        manifest.checks[f"{name}_free_boundary"] = check.boundary_gap <= check.step + _ROUNDOFF
        if args.convergence:
            fine = check_against_closed_form(params, 2 * n + 1, expert, tol, max_iter)
            entry["halved_step"] = asdict(fine)
            manifest.checks[f"{name}_convergence"] = (
                fine.max_error <= 0.6 * check.max_error or fine.max_error <= _ROUNDOFF
            )
        results[name] = entry
        logger.info("%s: max error %.3e, free boundary gap %.3e on %d nodes",
                    name, check.max_error, check.boundary_gap, n)
    return results, None


def cmd_simulate(args: argparse.Namespace, settings: Settings, manifest: RunManifest) -> Report:
    params = resolve_params(args)
    manifest.params = params.model_dump()
    cfg = SimConfig(
        n_paths=args.paths if args.paths is not None else settings.sim_paths,
        dt=args.dt if args.dt is not None else settings.sim_dt,
        horizon=args.horizon if args.horizon is not None else settings.sim_horizon,
        seed=args.seed if args.seed is not None else settings.sim_seed,
        initial_belief=args.p0,
        chunk_size=settings.sim_chunk_size,
        workers=args.workers if args.workers is not None else settings.sim_workers,
    )
    manifest.seed = cfg.seed
    options = asdict(cfg)
    options.pop("seed")
    # worker count never changes the result
    options.pop("workers")
    manifest.options.update({**options, "forced_mu": args.forced_mu,
                             "bias_allowance": args.bias_allowance})

    cf = derive_closed_form(params)
    result = simulate_equilibrium(params, cf, cfg, forced_mu=args.forced_mu)
    payload: Dict[str, Any] = {"result": result.to_dict()}
    if args.forced_mu is None:
        reference = value_function(params, cf, cfg.initial_belief)
        payload["closed_form_value"] = reference
        manifest.checks["payoff_consistent"] = payoff_consistent(
            result, reference, args.bias_allowance
        )
    else:
        diag = martingale_check(params, cfg, args.forced_mu)
        payload["martingale"] = asdict(diag)
        manifest.checks["martingale"] = diag.passed
    return payload, None


def cmd_two_period(args: argparse.Namespace, settings: Settings, manifest: RunManifest) -> Report:
    mu_grid = args.mu_grid if args.mu_grid is not None else settings.two_period_mu_grid
    nodes = args.quad_nodes if args.quad_nodes is not None else settings.two_period_quad_nodes
    manifest.options.update({"discount": args.discount, "mu_grid": mu_grid,
                             "quad_nodes": nodes, "method": args.method})
    if args.profile is not None:
        if args.profile < 3:
            raise ValueError(f"--profile needs at least 3 beliefs, got {args.profile}")
        beliefs = np.linspace(0.0, 1.0, args.profile)
        manifest.options["profile"] = args.profile
        profile = value_profile(args.discount, beliefs, mu_grid, nodes, args.method)
        second = np.concatenate(([np.nan], profile.second_differences, [np.nan]))
        columns = ["p1", "v1", "second_difference"]
        rows = [[p, v, None if np.isnan(d) else d]
                for p, v, d in zip(profile.beliefs, profile.values, second)]
        manifest.checks["v1_nondecreasing"] = bool(
            np.all(np.diff(profile.values) >= -_ROUNDOFF)
        )
        return {"rows": [dict(zip(columns, row)) for row in rows]}, (columns, rows)

    cfg = TwoPeriodConfig(p1=args.p1, discount=args.discount, mu_grid=mu_grid,
                          quad_nodes=nodes, method=args.method)
    manifest.options["p1"] = cfg.p1
    result = solve_two_period(cfg)
    manifest.checks["weak_duality"] = result.v1 <= result.minmax_v1 + _ROUNDOFF
    manifest.checks["safe_bound"] = result.v1 >= 1.0 + cfg.discount - _ROUNDOFF
    return asdict(result), None


# ─── Parser ──────────────────────────────────────────────────────────────────

def _common_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="Output file (default: standard output)")
    common.add_argument("--format", choices=("csv", "json"),
                        help="Output format (default depends on the subcommand)")
    common.add_argument("--log-level", help="Logging level (default: Settings.log_level)")
    return common


def _model_parser() -> argparse.ArgumentParser:
    model = argparse.ArgumentParser(add_help=False)
    group = model.add_argument_group("model parameters")
    group.add_argument("--r", type=float, help="Safe-arm return rate")
    group.add_argument("--theta-low", type=float, help="Low ambiguous return")
    group.add_argument("--theta-high", type=float, help="High ambiguous return")
    group.add_argument("--sigma", type=float, help="Ambiguous-arm volatility")
    group.add_argument("--delta", type=float, help="Discount rate")
    group.add_argument("--alpha", type=float, help="Robustness multiplier")
    group.add_argument("--gamma", type=float, help="Expert-signal volatility (optional)")
    group.add_argument("--preset", choices=sorted(PRESETS), help="Figure-reproduction preset")
    group.add_argument("--params", help="JSON file with model parameters")
    return model


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="robust-bandit",
        description="Robust two-armed bandit: cutoffs, value functions and numerical checks",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    common, model = _common_parser(), _model_parser()

    p = sub.add_parser("cutoff", parents=[common, model], help="Closed-form cutoffs")
    p.set_defaults(handler=cmd_cutoff, default_format="json")

    p = sub.add_parser("value", parents=[common, model], help="Value functions on beliefs")
    p.add_argument("--p", type=float, nargs="+", help="Beliefs to evaluate")
    p.add_argument("--grid", type=int, help="Number of uniform beliefs on [0, 1] (default: 1001)")
    p.set_defaults(handler=cmd_value, default_format="csv")

    p = sub.add_parser("sweep", parents=[common, model], help="Cutoffs over a parameter range")
    p.add_argument("--variable", choices=SWEEP_VARIABLES, help="Parameter to sweep")
    p.add_argument("--start", type=float)
    p.add_argument("--stop", type=float)
    p.add_argument("--steps", type=int, help="Number of sweep points (default: 100)")
    p.set_defaults(handler=cmd_sweep, default_format="csv")

    p = sub.add_parser("verify", parents=[common, model], help="Grid HJB against closed forms")
    p.add_argument("--grid", type=int, help="Interior grid points")
    p.add_argument("--tol", type=float, help="Solver tolerance")
    p.add_argument("--max-iter", type=int)
    p.add_argument("--error-tol", type=float, default=5e-4,
                   help="Allowed max |v_grid - v_closed| (default: 5e-4)")
    p.add_argument("--convergence", action="store_true",
                   help="Also solve with the grid step halved")
    p.set_defaults(handler=cmd_verify, default_format="json")

    p = sub.add_parser("simulate", parents=[common, model], help="Monte-Carlo belief paths")
    p.add_argument("--p0", type=float, default=0.6, help="Initial belief (default: 0.6)")
    p.add_argument("--paths", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--horizon", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--forced-mu", type=float, help="Hold the allocation fixed (diagnostic)")
    p.add_argument("--bias-allowance", type=float, default=0.0,
                   help="Extra slack for time-discretisation bias (default: 0)")
    p.set_defaults(handler=cmd_simulate, default_format="json")

    p = sub.add_parser("two-period", parents=[common], help="Two-period example")
    p.add_argument("--p1", type=float, default=0.5, help="Initial belief (default: 0.5)")
    p.add_argument("--discount", type=float, default=1.0)
    p.add_argument("--mu-grid", type=int)
    p.add_argument("--quad-nodes", type=int)
    p.add_argument("--method", choices=METHODS, default="exact")
    p.add_argument("--profile", type=int, help="Tabulate v1 on this many beliefs instead")
    p.set_defaults(handler=cmd_two_period, default_format="json")
    return parser


# ─── Entry point ─────────────────────────────────────────────────────────────

def _emit(args: argparse.Namespace, report: Report, manifest: RunManifest) -> None:
    payload, table = report
    fmt = args.format or args.default_format
    if fmt == "json":
        write_document({"checks": manifest.checks, **payload}, manifest, args.out)
        return
    if table is None:
        scalars = {k: v for k, v in payload.items() if not isinstance(v, (dict, list))}
        table = (list(scalars), [list(scalars.values())])
    write_table(table[0], table[1], manifest, args.out)


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    settings = get_settings()
    level = (args.log_level or settings.log_level).upper()
    if not isinstance(logging.getLevelName(level), int):
        print(f"robust-bandit: error: unknown log level {level!r}", file=sys.stderr)
        return EXIT_ERROR
    logging.basicConfig(
        level=level,
        format="%(asctime)s %(name)s %(levelname)s %(message)s",
        stream=sys.stderr,
    )
    handler: Callable[..., Report] = args.handler
    manifest = RunManifest(command=args.command)
    if getattr(args, "preset", None):
        manifest.options["preset"] = args.preset
    try:
        report = handler(args, settings, manifest)
        _emit(args, report, manifest)
    except (ValueError, OSError, ConvergenceError) as exc:
        # InvalidParamsError, InvalidBeliefError and MissingExpertSignalError are ValueErrors
        print(f"robust-bandit {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    if not manifest.passed:
        failed = ", ".join(name for name, ok in manifest.checks.items() if not ok)
        logger.error("checks failed: %s", failed)
        return EXIT_CHECK_FAILED
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
