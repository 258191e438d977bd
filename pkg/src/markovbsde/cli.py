"""Command-line front end.

One job per invocation; all outputs are CSV files with 17-significant-digit
floats so runs round-trip losslessly. Exit codes: 0 ok, 1 failed check,
2 usage or config error.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .bsde import solution_to_csv_rows, solve_bsde
from .chain import path_to_csv_rows, simulate_path
from .config import load_config
from .errors import ConfigError, MarkovBsdeError, MissingInputsError
from .hedge import (contraction_report, extract_hedge, hedge_to_csv_rows,
                    price_american, replicate_forward)
from .market import curves_to_csv_rows, stock_curves
from .montecarlo import european_consistency, isometry_check, report_csv_rows
from .rbsde import penalization_limit, rbsde_to_csv_rows, solve_reflected

SUBCOMMANDS = ("validate", "simulate", "solve-bsde", "solve-rbsde",
               "price-american", "hedge", "verify", "plot-data")


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, float):
        return "%.17g" % x
    return str(x)


def _write_csv(path, header, rows):
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(x) for x in row])


def _resolve_payoff(config):
    curves = None
    if config.payoff_spec and config.payoff_spec.get("kind") == "put_on_stock":
        curves = stock_curves(config.market, steps=config.solver.steps)
    return config.build_payoff(curves=curves), curves


def _cmd_validate(config, out):
    rep = {"holds": True, "worst_margin": 1.0, "worst_time_state": (0.0, 0)}
    rows = [("config_valid", 1.0, 1.0, 0.0, True)]
    if config.market is not None:
        rep = contraction_report(config.market)
        rows.append(("contraction", rep["worst_margin"], 0.0, 0.0, rep["holds"]))
        for key in ("c1", "c4", "c5", "c6", "m"):
            rows.append((key, rep[key], 0.0, 0.0, True))
    _write_csv(out / "validation_report.csv",
               ("check_name", "lhs", "rhs", "std_error", "pass"), rows)
    return 0 if rep["holds"] else 1


def _cmd_simulate(config, out):
    n = min(config.solver.n_paths, 100)
    for p in range(n):
        path = simulate_path(config.chain, config.solver.seed + p)
        _write_csv(out / f"path_{p:04d}.csv", ("jump_index", "time", "state"),
                   path_to_csv_rows(path))
    return 0


def _cmd_solve_bsde(config, out):
    driver = config.build_driver()
    terminal = config.terminal
    if terminal is None:
        raise ConfigError("solve-bsde needs a 'terminal' vector")
    sol = solve_bsde(config.chain, driver, terminal, config.solver.steps,
                     scheme=config.solver.scheme,
                     strict_contraction=config.solver.strict_contraction)
    _write_csv(out / "bsde_solution.csv", ("time", "state", "y_value"),
               solution_to_csv_rows(sol))
    return 0


def _cmd_solve_rbsde(config, out):
    driver = config.build_driver()
    payoff, _ = _resolve_payoff(config)
    if payoff is None:
        raise ConfigError("solve-rbsde needs a 'payoff' section as the obstacle")
    terminal = config.terminal
    if terminal is None:
        terminal = payoff.terminal(config.chain.horizon, config.chain.n_states)
    sol = solve_reflected(config.chain, driver, terminal, payoff.obstacle(),
                          config.solver.steps)
    _write_csv(out / "rbsde_solution.csv", ("time", "state", "v", "z", "k"),
               rbsde_to_csv_rows(sol))
    limit = penalization_limit(config.chain, driver, terminal, payoff.obstacle(),
                               min(config.solver.steps, 400),
                               config.solver.penalization_tol)
    _write_csv(out / "penalization_trace.csv", ("n", "sup_distance"),
               limit.penalization_trace)
    return 0


def _cmd_price_american(config, out):
    payoff, _ = _resolve_payoff(config)
    if payoff is None:
        raise ConfigError("price-american needs a 'payoff' section")
    if config.market is None:
        raise ConfigError("price-american needs a 'market' section")
    sol = price_american(config.market, payoff, config.solver.steps,
                         strict_contraction=config.solver.strict_contraction)
    _write_csv(out / "american_solution.csv", ("time", "state", "v", "z", "k"),
               rbsde_to_csv_rows(sol))
    g_rows = [(float(t), i, payoff.g(float(t), i))
              for t in sol.grid for i in range(config.chain.n_states)]
    _write_csv(out / "payoff_surface.csv", ("time", "state", "g"), g_rows)
    return 0


def _cmd_hedge(config, out):
    payoff, curves = _resolve_payoff(config)
    if payoff is None or config.market is None:
        raise ConfigError("hedge needs 'payoff' and 'market' sections")
    if curves is None:
        curves = stock_curves(config.market, steps=config.solver.steps)
    sol = price_american(config.market, payoff, config.solver.steps,
                         strict_contraction=config.solver.strict_contraction)
    strat = extract_hedge(config.market, curves, sol)
    n = config.market.n_stocks
    _write_csv(out / "hedge.csv",
               ("time", "state", "V", "K", *[f"h_{j + 1}" for j in range(n)], "h0"),
               hedge_to_csv_rows(sol, strat))
    _write_csv(out / "stock_curves.csv", ("time", "stock", "state", "price"),
               curves_to_csv_rows(curves))
    rows = []
    ok = True
    for p in range(min(config.solver.n_paths, 20)):
        path = simulate_path(config.chain, config.solver.seed + p)
        rep = replicate_forward(config.market, curves, strat, sol, payoff, path)
        ok = ok and rep["dominates"] and rep["max_gap"] < 1e-6
        rows.append((p, rep["max_gap"], rep["terminal_gap"], rep["dominates"]))
    _write_csv(out / "replication_report.csv",
               ("path", "max_gap", "terminal_gap", "dominates"), rows)
    return 0 if ok else 1


def _cmd_verify(config, out):
    reports = {}
    z = np.zeros(config.chain.n_states)
    z[0] = 1.0
    reports["isometry"] = isometry_check(config.chain, z,
                                         n_paths=config.solver.n_paths,
                                         seed_base=config.solver.seed)
    if config.market is not None:
        claim = config.terminal
        if claim is None:
            claim = np.ones(config.chain.n_states)
        reports["european_consistency"] = european_consistency(
            config.market, claim, n_paths=config.solver.n_paths,
            steps=min(config.solver.steps, 400), seed_base=config.solver.seed)
    _write_csv(out / "verify_report.csv",
               ("check_name", "lhs", "rhs", "std_error", "pass"),
               report_csv_rows(reports))
    return 0 if all(r["pass"] for r in reports.values()) else 1


def emit_plot_data(result_dir):
    """Derive tidy plot-ready CSVs from a previous run's outputs."""
    result_dir = Path(result_dir)
    produced = []
    value_file = None
    for name in ("american_solution.csv", "rbsde_solution.csv", "bsde_solution.csv"):
        if (result_dir / name).exists():
            value_file = result_dir / name
            break
    if value_file is not None:
        with open(value_file) as fh:
            rows = list(csv.DictReader(fh))
        val_key = "v" if "v" in rows[0] else "y_value"
        tidy = [(r["time"], r["state"], r[val_key]) for r in rows]
        _write_csv(result_dir / "value_vs_time.csv", ("time", "state", "value"), tidy)
        produced.append("value_vs_time.csv")
    payoff_file = result_dir / "payoff_surface.csv"
    if value_file is not None and payoff_file.exists():
        with open(value_file) as fh:
            vrows = list(csv.DictReader(fh))
        with open(payoff_file) as fh:
            grows = list(csv.DictReader(fh))
        gmap = {(r["time"], r["state"]): float(r["g"]) for r in grows}
        boundary = {}
        for r in vrows:
            key = (r["time"], r["state"])
            if key in gmap and float(r["v"]) <= gmap[key] + 1e-9:
                state = int(r["state"])
                t = float(r["time"])
                boundary.setdefault(state, t)
                boundary[state] = min(boundary[state], t)
        states = sorted({int(r["state"]) for r in vrows})
        horizon = max(float(r["time"]) for r in vrows)
        rows = [(s, boundary.get(s, horizon)) for s in states]
        _write_csv(result_dir / "exercise_boundary.csv",
                   ("state", "first_exercise_time"), rows)
        produced.append("exercise_boundary.csv")
    trace_file = result_dir / "penalization_trace.csv"
    if trace_file.exists():
        with open(trace_file) as fh:
            rows = [(r["n"], r["sup_distance"]) for r in csv.DictReader(fh)]
        _write_csv(result_dir / "penalization_convergence.csv",
                   ("n", "sup_distance"), rows)
        produced.append("penalization_convergence.csv")
    if not produced:
        raise MissingInputsError(f"no solver outputs found in {result_dir}")
    return produced


def run(config_path, subcommand, out_dir=None, seed=None, steps=None,
        paths=None, strict_contraction=False):
    """Load the config, dispatch one job and return the exit code."""
    if subcommand not in SUBCOMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    if subcommand == "plot-data":
        emit_plot_data(out_dir or ".")
        return 0
    config = load_config(config_path)
    if seed is not None:
        config.solver.seed = int(seed)
    if steps is not None:
        config.solver.steps = int(steps)
    if paths is not None:
        config.solver.n_paths = int(paths)
    if strict_contraction:
        config.solver.strict_contraction = True
    out = Path(out_dir) if out_dir is not None else Path(config.output_dir)
    dispatch = {
        "validate": _cmd_validate,
        "simulate": _cmd_simulate,
        "solve-bsde": _cmd_solve_bsde,
        "solve-rbsde": _cmd_solve_rbsde,
        "price-american": _cmd_price_american,
        "hedge": _cmd_hedge,
        "verify": _cmd_verify,
    }
    return dispatch[subcommand](config, out)


def main(argv=None):
    parser = argparse.ArgumentParser(
        prog="markovbsde",
        description="BSDE/RBSDE solvers and American-option superhedging "
                    "for finite-state Markov-chain markets.")
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("subcommand", choices=SUBCOMMANDS)
    parser.add_argument("--config", required=False, help="run configuration file")
    parser.add_argument("--out", default=None, help="output directory")
    parser.add_argument("--seed", type=int, default=None)
    parser.add_argument("--steps", type=int, default=None)
    parser.add_argument("--paths", type=int, default=None)
    parser.add_argument("--strict-contraction", action="store_true")
    args = parser.parse_args(argv)
    if args.subcommand != "plot-data" and not args.config:
        parser.error("--config is required for this subcommand")
    try:
        return run(args.config, args.subcommand, out_dir=args.out,
                   seed=args.seed, steps=args.steps, paths=args.paths,
                   strict_contraction=args.strict_contraction)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except MissingInputsError as exc:
        print(f"missing inputs: {exc}", file=sys.stderr)
        return 1
    except MarkovBsdeError as exc:
        print(f"error [{type(exc).__name__}]: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
