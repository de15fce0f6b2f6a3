"""Command-line front end: ``macalloc <command> --config <path>``.

Exit codes: 0 success, 2 config error, 3 command not available in the
configured mode, 4 solver non-convergence.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import math
import os
import platform
import sys
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import config as cfgmod
from .allocation import (MultiplierConvergenceError, PowerControlOracle, QuadratureError,
                         boundary_rate, solve_multipliers)
from .bounds import bound_sweep
from .capacity import PolymatroidRegion, averaged_region, instantaneous_region, subset_key
from .optimize import PolymatroidOracle, frank_wolfe
from .policy import performance_gap

EXIT_OK, EXIT_CONFIG, EXIT_MODE, EXIT_SOLVER = 0, 2, 3, 4
COMMANDS = ("regions", "optimize", "boundary", "simulate", "bounds")
NORMALIZATION = "powers normalized by the noise power N0; rates in nats"


class ModeError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


def _num(x):
    x = float(x)
    return x if math.isfinite(x) else None


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj


def _cell(x):
    if isinstance(x, (bool, np.bool_)):
        return int(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return x


class Outputs:
    """Writes files into the output directory and remembers their names."""

    def __init__(self, directory: Path):
        self.dir = directory
        self.dir.mkdir(parents=True, exist_ok=True)
        self.files: list[str] = []

    def json(self, name: str, data) -> None:
        text = json.dumps(_jsonable(data), indent=2) + "\n"
        (self.dir / name).write_text(text)
        self.files.append(name)

    def csv(self, name: str, header: list, rows) -> None:
        with open(self.dir / name, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for row in rows:
                w.writerow([_cell(x) for x in row])
        self.files.append(name)


def _users(m: int, prefix: str) -> list[str]:
    return [f"{prefix}_{i + 1}" for i in range(m)]


def _require(cfg: dict, mode: str, command: str) -> None:
    if cfg["mode"] != mode:
        raise ModeError(f"'{command}' needs mode = \"{mode}\" (config has \"{cfg['mode']}\")")


def _region_json(region: PolymatroidRegion, se=None) -> dict:
    out = region.to_dict()
    if se is not None:
        out["se"] = {subset_key(k): float(se[k]) for k in range(1, se.size)}
    return out


def cmd_regions(cfg: dict, out: Outputs, workers: int) -> dict:
    _require(cfg, "fixed-power", "regions")
    s, fm = cfgmod.build_scenario(cfg), cfgmod.build_fading(cfg)
    n, seed = cfg["samples"]["n"], cfg["seed"]
    region, se = averaged_region(s, fm, n, seed, workers)
    out.json("averaged_region.json", {**_region_json(region, se), "n_samples": n, "seed": seed})
    states = [{"gains": h, **_region_json(instantaneous_region(s, np.asarray(h)))}
              for h in cfg["samples"]["states"]]
    out.json("instantaneous_regions.json", states)
    return {"total": region.total}


def cmd_optimize(cfg: dict, out: Outputs, workers: int) -> dict:
    s, fm, u = cfgmod.build_scenario(cfg), cfgmod.build_fading(cfg), cfgmod.build_utility(cfg)
    sol = cfg["solver"]
    summary = {"mode": cfg["mode"]}
    if cfg["mode"] == "fixed-power":
        region, _ = averaged_region(s, fm, cfg["samples"]["n"], cfg["seed"], workers)
        oracle = PolymatroidOracle(region)
        summary["n_samples"] = cfg["samples"]["n"]
    else:
        oracle = PowerControlOracle(s, fm, cfgmod.build_budget(cfg), rtol=sol["multiplier_rtol"])
    try:
        report = frank_wolfe(oracle, u, rule=sol["rule"], gap_tol=sol["gap_tol"],
                             max_iter=sol["max_iter"])
    except (MultiplierConvergenceError, QuadratureError) as exc:
        raise SolverError(str(exc))
    m = s.num_users
    rows = []
    for k, (val, rates) in enumerate(zip(report.utilities, report.path)):
        gap = report.gaps[k] if k < len(report.gaps) else math.nan
        rows.append([k, val, gap, *rates])
    out.csv("iterations.csv", ["iter", "utility", "gap", *_users(m, "R")], rows)
    summary.update({
        "rates": report.rates, "utility": report.utility, "gap": report.gap,
        "iterations": report.iterations, "converged": report.converged, "rule": report.rule,
        "gap_tol": sol["gap_tol"], "gradient": u.gradient(report.rates),
    })
    if cfg["mode"] == "power-control":
        _, mult = oracle.solve(u.gradient(report.rates))
        summary["multipliers"] = mult.values
        summary["expected_power"] = mult.expected_power
    out.json("summary.json", summary)
    if not report.converged:
        raise SolverError(f"Frank-Wolfe stopped after {report.iterations} oracle calls "
                          f"with gap {report.gap:.3e} > {sol['gap_tol']:.3e}")
    return summary


def cmd_boundary(cfg: dict, out: Outputs, workers: int) -> dict:
    _require(cfg, "power-control", "boundary")
    s, fm, budget = cfgmod.build_scenario(cfg), cfgmod.build_fading(cfg), cfgmod.build_budget(cfg)
    m = s.num_users
    rows, failure = [], None
    for mu in cfg["boundary"]["mu"]:
        mu = np.asarray(mu)
        try:
            mult = solve_multipliers(s, fm, budget, mu, rtol=cfg["solver"]["multiplier_rtol"])
            rates = boundary_rate(s, fm, mu, mult.values)
        except MultiplierConvergenceError as exc:
            failure = (f"multipliers for mu={mu.tolist()} did not converge; "
                       f"lambda={np.asarray(exc.multipliers).tolist()}, "
                       f"residuals={np.asarray(exc.residuals).tolist()}")
            break
        except QuadratureError as exc:
            failure = f"quadrature failed for mu={mu.tolist()}: {exc}"
            break
        rows.append([*mu, *mult.values, *rates, mult.residual])
    out.csv("boundary.csv", [*_users(m, "mu"), *_users(m, "lambda"), *_users(m, "R"), "residual"], rows)
    if failure:
        raise SolverError(failure)
    return {"points": len(rows)}


def cmd_simulate(cfg: dict, out: Outputs, workers: int) -> dict:
    _require(cfg, "fixed-power", "simulate")
    s, fm, u = cfgmod.build_scenario(cfg), cfgmod.build_fading(cfg), cfgmod.build_utility(cfg)
    n, seed = cfg["samples"]["n"], cfg["seed"]
    res = performance_gap(s, fm, u, n, seed, workers)
    g = res.greedy
    m = s.num_users
    rows = ([k, *h, *r, uk] for k, (h, r, uk) in
            enumerate(zip(res.gains, g.samples, g.sample_utilities)))
    out.csv("samples.csv", ["sample", *_users(m, "h"), *_users(m, "R"), "u"], rows)
    summary = {
        "policy": "greedy",
        "n_samples": n, "seed": seed,
        "mean_rates": g.mean_rates, "rate_se": g.rate_se,
        "mean_utility": g.mean_utility, "utility_se": g.utility_se,
        "utility_of_mean": g.utility_of_mean, "utility_of_mean_se": g.utility_of_mean_se,
        "optimal_rates": res.optimum, "u_star": res.u_star,
        "gap": res.gap, "gap_se": res.gap_se,
        "jensen_chain": [{"quantity": q, "value": v, "se": e} for q, v, e in res.jensen_chain()],
        "witness": "per-state mixture of greedy vertices reproducing the optimal mean rate",
    }
    out.json("summary.json", summary)
    return summary


def cmd_bounds(cfg: dict, out: Outputs, workers: int) -> dict:
    _require(cfg, "fixed-power", "bounds")
    s, fm, u = cfgmod.build_scenario(cfg), cfgmod.build_fading(cfg), cfgmod.build_utility(cfg)
    n, seed = cfg["samples"]["n"], cfg["seed"]
    grid = cfg["bounds"]["epsilon"]
    reports = {}
    for c in sorted(set(cfg["bounds"]["scales"]) | {1.0}, reverse=True):
        reports[c] = bound_sweep(s, fm.scaled(c) if c != 1.0 else fm, u, grid, n, seed, workers)
    base = reports[1.0]
    cols = ["epsilon", "delta", "A", "B", "r", "omega", "bound1", "bound2", "min_bound",
            "gap", "gap_se", "vacuous_flag"]
    out.csv("bounds.csv", cols,
            ([r.epsilon, r.delta, r.a, r.b, r.r, r.omega, r.bound1, r.bound2, r.min_bound,
              base.gap, base.gap_se, r.vacuous] for r in base.rows))
    fig_rows, curves = [], []
    for c in cfg["bounds"]["scales"]:
        rep = reports[c]
        eps_min, val_min = rep.minimizer()
        curves.append({"scale": c, "sigma_h": rep.sigma_h, "u_star": rep.u_star, "gap": rep.gap,
                       "minimizing_epsilon": eps_min, "min_bound": val_min})
        for r in rep.rows:
            fig_rows.append([c, rep.sigma_h, r.epsilon, r.bound1, r.bound2, r.min_bound,
                             r.epsilon == eps_min])
    out.csv("figure1.csv", ["scale", "sigma_h", "epsilon", "bound1", "bound2", "min_bound",
                            "is_minimizer"], fig_rows)
    summary = {
        "sigma_h2": base.sigma_h2, "u_star": base.u_star, "gap": base.gap, "gap_se": base.gap_se,
        "n_samples": n, "seed": seed, "normalization": NORMALIZATION,
        "constants": f"A and B are estimates from {n} sampled states, not certificates",
        "minimizers": {name: dict(zip(("epsilon", "value"), base.minimizer(name)))
                       for name in ("bound1", "bound2", "min_bound")},
        "curves": curves,
    }
    out.json("summary.json", summary)
    return summary


HANDLERS = {"regions": cmd_regions, "optimize": cmd_optimize, "boundary": cmd_boundary,
            "simulate": cmd_simulate, "bounds": cmd_bounds}


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    now = (dt.datetime.fromtimestamp(int(epoch), dt.timezone.utc) if epoch
           else dt.datetime.now(dt.timezone.utc))
    return now.isoformat(timespec="seconds")


def _manifest(command: str, cfg: dict, started: str, out: Outputs) -> dict:
    return {
        "command": command,
        "config_hash": cfgmod.config_hash(cfg),
        "seed": cfg["seed"],
        "versions": {"macalloc": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                     "python": platform.python_version()},
        "started": started,
        "finished": _timestamp(),
        "files": sorted(out.files + ["manifest.json"]),
    }


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="macalloc", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", help="scenario config (TOML, or JSON)")
    parser.add_argument("--out", help="output directory (overrides output.dir)")
    parser.add_argument("--threads", type=int, default=1, help="worker threads; results do not depend on it")
    parser.add_argument("--print-config", action="store_true",
                        help="print the config with all defaults filled in, then exit")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.threads < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    if args.config is None:
        if args.print_config:
            print(json.dumps(cfgmod.DEFAULTS, indent=2))
            return EXIT_OK
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = cfgmod.load(args.config)
    except cfgmod.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out is not None:
        cfg["output"]["dir"] = args.out
    if args.print_config:
        print(json.dumps(cfg, indent=2))
        return EXIT_OK

    started = _timestamp()
    out = Outputs(Path(cfg["output"]["dir"]))
    code = EXIT_OK
    try:
        HANDLERS[args.command](cfg, out, args.threads)
    except ModeError as exc:
        print(f"mode error: {exc}", file=sys.stderr)
        return EXIT_MODE
    except SolverError as exc:
        print(f"solver did not converge: {exc}", file=sys.stderr)
        code = EXIT_SOLVER
    out.json("manifest.json", _manifest(args.command, cfg, started, out))
    return code


if __name__ == "__main__":
    sys.exit(main())
