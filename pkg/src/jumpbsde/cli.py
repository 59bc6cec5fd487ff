"""Batch command line: solve, simulate, verify, stability, price.

Configs are flat JSON documents; every run resolves the config with the
command-line overrides, fingerprints it, and embeds the fingerprint in
each output file.  Exit codes: 0 pass, 1 configuration error, 2 check
failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import drivers, reports
from .bsde import TerminalCondition
from .estimates import all_passed, apriori_bounds, check_apriori, shifted_problem, stability_experiment
from .finance import MarketSpec, feasibility_check, price_claim
from .markov import MarkovModel, marginal_law, simulate_batch
from .montecarlo import verify_pathwise
from .picard import solve_direct, solve_picard
from .truncation import TruncationSchedule, solve_local

__all__ = ["main"]

EXIT_PASS = 0
EXIT_CONFIG = 1
EXIT_CHECK = 2
EXIT_USAGE = 64


class UsageError(Exception):
    pass


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _build_parser() -> _Parser:
    parser = _Parser(prog="jumpbsde", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in ("solve", "simulate", "verify", "stability", "price"):
        cmd = sub.add_parser(name)
        cmd.add_argument("--config", required=True)
        cmd.add_argument("--out", default=".")
        cmd.add_argument("--seed", type=int, default=None)
        cmd.add_argument("--paths", type=int, default=None)
        cmd.add_argument("--grid", type=int, default=None)
        cmd.add_argument("--tol", type=float, default=None)
        cmd.add_argument("--threads", type=int, default=1)
    return parser


def _load_config(path: str, args) -> dict:
    try:
        with open(path) as handle:
            cfg = json.load(handle)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}")
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}")
    if args.seed is not None:
        cfg["seed"] = args.seed
    if args.grid is not None:
        cfg["grid"] = args.grid
    if args.paths is not None:
        cfg.setdefault("verify", {})["paths"] = args.paths
    if args.tol is not None:
        cfg.setdefault("solver", {})["tol"] = args.tol
    return cfg


def _validate(cfg: dict) -> None:
    if "model" not in cfg:
        raise ConfigError("missing key: model")
    driver_cfg = cfg.get("driver", {})
    name = driver_cfg.get("name")
    if name not in drivers.REGISTRY:
        raise ConfigError(f"driver name must be one of {sorted(drivers.REGISTRY)}: got {name!r}")
    if int(cfg.get("grid", 0)) < 2:
        raise ConfigError("grid must be at least 2 steps")
    solver = cfg.get("solver", {})
    tol = float(solver.get("tol", 1e-12))
    if tol <= 0.0:
        raise ConfigError("solver.tol must be positive")
    if solver.get("method") == "local":
        sched = solver.get("schedule")
        if not sched:
            raise ConfigError("solver.schedule is required for the local method")


def _build_problem(cfg: dict):
    try:
        model = MarkovModel.from_config(cfg["model"])
        driver = drivers.from_config(cfg["driver"]["name"], cfg["driver"].get("params"))
        terminal = TerminalCondition(np.asarray(cfg["terminal"], dtype=float))
        if terminal.values.shape != (model.n_states,):
            raise ValueError("terminal must assign one value per state")
        start = cfg.get("start", {})
        t0 = float(start.get("time", 0.0))
        x0 = start.get("state", model.states[0])
        model.index(x0)
        grid = model.grid(int(cfg["grid"]), t0=t0)
    except (KeyError, ValueError) as exc:
        raise ConfigError(str(exc))
    return model, driver, terminal, t0, x0, grid


def _schedule(cfg: dict, driver) -> TruncationSchedule:
    sched = cfg.get("solver", {}).get("schedule")
    try:
        if sched is None:
            return TruncationSchedule.for_driver(driver)
        return TruncationSchedule(radii=tuple(sched["radii"]),
                                  delta=float(sched["delta"]),
                                  growth_exponent=driver.growth_exponent)
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"invalid truncation schedule: {exc}")


def _solve(cfg: dict, model, driver, terminal, grid):
    solver = cfg.get("solver", {})
    method = solver.get("method", "picard")
    tol = float(solver.get("tol", 1e-12))
    max_iter = int(solver.get("max_iter", 200))
    if method == "picard":
        return solve_picard(model, driver, terminal, grid, tol=tol, max_iter=max_iter)
    if method == "direct":
        return solve_direct(model, driver, terminal, grid), None
    if method == "local":
        return solve_local(model, driver, terminal, grid, _schedule(cfg, driver),
                           tol=float(solver.get("cascade_tol", 1e-8)))
    raise ConfigError(f"unknown solver method {method!r}")


def _cmd_solve(cfg, args, fingerprint) -> int:
    model, driver, terminal, _, _, grid = _build_problem(cfg)
    field, diag = _solve(cfg, model, driver, terminal, grid)
    reports.write_value_field(os.path.join(args.out, "u.csv"), model, field, fingerprint)
    status = EXIT_PASS
    if diag is not None:
        if hasattr(diag, "cauchy_distances"):
            reports.write_cascade_diagnostics(os.path.join(args.out, "diagnostics.csv"),
                                              diag, fingerprint)
        else:
            reports.write_picard_diagnostics(os.path.join(args.out, "diagnostics.csv"),
                                             diag, fingerprint)
        if not diag.converged:
            status = EXIT_CHECK
    return status


def _cmd_simulate(cfg, args, fingerprint) -> int:
    model, _, _, t0, x0, _ = _build_problem(cfg)
    n_paths = int(cfg.get("verify", {}).get("paths", 100))
    trajs = simulate_batch(model, t0, x0, n_paths, int(cfg.get("seed", 0)),
                           threads=args.threads)
    reports.write_trajectories(os.path.join(args.out, "paths.csv"), model, trajs, fingerprint)
    return EXIT_PASS


def _cmd_verify(cfg, args, fingerprint) -> int:
    model, driver, terminal, t0, x0, grid = _build_problem(cfg)
    verify_cfg = cfg.get("verify", {})
    u_csv = verify_cfg.get("u_csv")
    if u_csv:
        field = reports.read_value_field(u_csv, model)
    else:
        field, _ = _solve(cfg, model, driver, terminal, grid)
    stats = verify_pathwise(model, driver, field, t0, x0,
                            paths=int(verify_cfg.get("paths", 1000)),
                            seed=int(cfg.get("seed", 0)), threads=args.threads)
    law = marginal_law(model, float(field.grid[0]), x0, field.grid)
    bounds = apriori_bounds(driver.growth_scale, float(field.grid[-1] - field.grid[0]),
                            terminal.mean_square(law),
                            terminal_sq_sup=terminal.sup_square())
    checks = check_apriori(model, law, field, bounds)
    reports.write_residual_stats(os.path.join(args.out, "residuals.json"), stats, fingerprint)
    reports.write_bound_checks(os.path.join(args.out, "apriori.json"), checks, fingerprint)
    max_residual = float(verify_cfg.get("max_residual", 1e-3))
    ok = (stats.max_abs_residual <= max_residual
          and abs(stats.martingale_mean) <= 3.0 * stats.martingale_stderr
          and all_passed(checks))
    return EXIT_PASS if ok else EXIT_CHECK


def _cmd_stability(cfg, args, fingerprint) -> int:
    model, driver, terminal, _, _, grid = _build_problem(cfg)
    stab = cfg.get("stability", {})
    offsets = stab.get("offsets")
    if offsets is None:
        raise ConfigError("stability.offsets is required")
    perturbations = [shifted_problem(driver, terminal, float(c)) for c in offsets]
    report = stability_experiment(model, driver, terminal, grid, perturbations,
                                  tol=float(stab.get("tol", 1e-3)),
                                  schedule=_schedule(cfg, driver),
                                  bound_radius=float(stab.get("radius", 16.0)),
                                  seed=int(cfg.get("seed", 0)))
    reports.write_stability_report(os.path.join(args.out, "stability.csv"),
                                   report, fingerprint)
    return EXIT_PASS if report.passed else EXIT_CHECK


def _cmd_price(cfg, args, fingerprint) -> int:
    model, driver, terminal, _, _, grid = _build_problem(cfg)
    market = cfg.get("market", {})
    try:
        payoff = TerminalCondition(np.asarray(market.get("payoff", cfg["terminal"]), dtype=float))
        spec = MarketSpec(model=model, sigma=np.asarray(market.get("sigma", 1.0)),
                          generator=driver, payoff=payoff)
        method = {"picard": "lipschitz", "local": "local"}.get(
            cfg.get("solver", {}).get("method", "picard"))
        if method is None:
            raise ConfigError("price supports solver methods picard and local")
        schedule = _schedule(cfg, spec.induced_driver()) if method == "local" else None
        result = price_claim(spec, grid, method, schedule=schedule,
                             tol=float(cfg.get("solver", {}).get("tol", 1e-12)))
    except ValueError as exc:
        raise ConfigError(str(exc))
    checks = feasibility_check(spec, result)
    reports.write_pricing(os.path.join(args.out, "pricing.csv"), model,
                          result.value, result.strategy, fingerprint)
    reports.write_bound_checks(os.path.join(args.out, "feasibility.json"),
                               checks, fingerprint)
    return EXIT_PASS if all_passed(checks) else EXIT_CHECK


_COMMANDS = {
    "solve": _cmd_solve,
    "simulate": _cmd_simulate,
    "verify": _cmd_verify,
    "stability": _cmd_stability,
    "price": _cmd_price,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _load_config(args.config, args)
        _validate(cfg)
        os.makedirs(args.out, exist_ok=True)
        fingerprint = reports.config_fingerprint(cfg)
        return _COMMANDS[args.command](cfg, args, fingerprint)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
