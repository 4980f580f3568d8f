"""Command-line front end.

Subcommands: ``lln-check``, ``simulate``, ``fixed-point``, ``rate-frontier``,
``laplace-compare``, ``varrep-check``.  Exit codes: 0 pass, 1 check failure,
2 config or I/O error, 3 numeric error.
"""

from __future__ import annotations

import argparse
import logging
import math
import os
import sys

import numpy as np

from .analytic import solve_limit
from .bl import GaussianMeasure, bl_distance_lower, default_dictionary
from .config import Config, load_config
from .core import KillingFunction, TimeGrid
from .csvio import write_csv
from .errors import ConfigError, NumericError
from .fixedpoint import j_cost, sample_theta, solve_fixed_point
from .sim import ControlSpec, ReplicaSpec, run_replicas, simulate_uncontrolled
from .variational import (ConstantG, LinearThresholdG, TerminalMassFunctional, frontier_envelope,
                          laplace_variational_upper, random_g_family, rate_frontier, varrep_check)

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("kbl")


def _model(cfg: Config):
    m = cfg["model"]
    if m["zeta"] == "constant":
        zeta = KillingFunction.constant(m["zeta_param"])
    else:
        zeta = KillingFunction.abs_power(m["zeta_param"])
    return zeta, TimeGrid(m["T"], m["m"]), m["d"]


def _drift_vector(values, d, where):
    if len(values) == 1:
        return np.full(d, values[0])
    if len(values) != d:
        raise ConfigError(f"{where}: drift needs 1 or d={d} components")
    return np.array(values)


def _out(cfg, name):
    return os.path.join(cfg["output"]["dir"], name)


def cmd_lln_check(cfg: Config) -> int:
    zeta, grid, d = _model(cfg)
    run = cfg["run"]
    batch = run_replicas(ReplicaSpec(run["n"], d, grid, zeta, run["seed"]), run["replicas"], run["workers"])
    profile = solve_limit(zeta, grid, d, strict=False)
    # dictionary distance of replica 0 against a(t) N(0, t)
    path0, _ = simulate_uncontrolled(run["n"], d, grid, zeta, run["seed"], 0)
    dictionary = default_dictionary(d)
    stride = cfg["lln"]["distance_stride"]
    dist = np.full(grid.m + 1, math.nan)
    for k in range(0, grid.m + 1):
        if k % stride == 0 or k == grid.m:
            ref = GaussianMeasure(float(profile.a[k]), float(grid.times[k]), d)
            dist[k] = bl_distance_lower(path0.measure_at(k), ref, dictionary)
    rows = zip(grid.times, batch.mean_mass, batch.se_mass, profile.a, dist)
    path = write_csv(_out(cfg, "lln.csv"),
                     ["t", "mass_mean", "mass_se", "analytic_mass", "dictionary_distance"], rows)
    dev = float(np.max(np.abs(batch.mean_mass - profile.a)))
    tol = cfg["lln"]["tolerance"]
    ok = dev <= tol
    print(f"lln-check: sup|mass - a| = {dev:.6g} (tolerance {tol:g}); "
          f"mass(T) = {batch.mean_mass[-1]:.6f} +- {batch.se_mass[-1]:.2g}, a(T) = {profile.a[-1]:.6f} "
          f"-> {'PASS' if ok else 'FAIL'}; wrote {path}")
    return EXIT_OK if ok else EXIT_FAIL


def cmd_simulate(cfg: Config) -> int:
    zeta, grid, d = _model(cfg)
    run, sim = cfg["run"], cfg["simulate"]
    control = ControlSpec.constant(_drift_vector(sim["drift"], d, "[simulate]"), sim["threshold_rate"])
    spec = ReplicaSpec(run["n"], d, grid, zeta, run["seed"], None if control.is_zero else control,
                       keep_kill_times=sim["kill_times"])
    batch = run_replicas(spec, run["replicas"], run["workers"])
    rows = [(r.replica, t, mass, zm)
            for r in batch.results
            for t, mass, zm in zip(grid.times, r.path.mass, r.path.zeta_mean)]
    path = write_csv(_out(cfg, "paths.csv"), ["replica", "t", "mass", "zeta_mean"], rows)
    if sim["kill_times"]:
        write_csv(_out(cfg, "kill_times.csv"), ["replica", "particle", "threshold", "kill_time"],
                  ((r.replica, i, s, kt) for r in batch.results
                   for i, (s, kt) in enumerate(zip(r.thresholds, r.kill_times))))
    cost = batch.results[0].cost
    print(f"simulate: {run['replicas']} replicas, control {control.describe()}, "
          f"cost {cost.total:.6g}; mass(T) = {batch.mean_mass[-1]:.6f}; wrote {path}")
    return EXIT_OK


def cmd_fixed_point(cfg: Config) -> int:
    zeta, grid, d = _model(cfg)
    fpc = cfg["fixed_point"]
    control = ControlSpec.constant(_drift_vector(fpc["drift"], d, "[fixed_point]"), fpc["threshold_rate"])
    theta = sample_theta(control, fpc["M"], d, grid, cfg["run"]["seed"])
    res = solve_fixed_point(theta, zeta, grid, tol=fpc["tol"], max_iter=fpc["max_iter"],
                            damping=fpc["damping"])
    rows = ((t, h, mass, zm, res.iterations, res.residual)
            for t, h, mass, zm in zip(grid.times, res.H, res.mass, res.zeta_mean))
    path = write_csv(_out(cfg, "fixed_point.csv"),
                     ["t", "H", "mass", "zeta_mean", "iterations", "residual"], rows)
    print(f"fixed-point: converged in {res.iterations} iterations (residual {res.residual:.3g}); "
          f"J = {j_cost(theta):.6g}; mass(T) = {res.mass[-1]:.6f}; wrote {path}")
    return EXIT_OK


def _frontier_family(rates, drifts, d):
    family = [ControlSpec.constant(np.zeros(d), r) for r in rates]
    family += [ControlSpec.constant(np.full(d, u), 1.0) for u in drifts]
    return family


def cmd_rate_frontier(cfg: Config) -> int:
    zeta, grid, d = _model(cfg)
    rf = cfg["rate_frontier"]
    family = _frontier_family(rf["rates"], rf["drifts"], d)
    if not family:
        raise ConfigError("rate-frontier: empty control grid")
    certs = rate_frontier(family, zeta, grid, rf["M"], seed=cfg["run"]["seed"], d=d, tol=rf["tol"])
    write_csv(_out(cfg, "certificates.csv"), ["control", "J", "observable"],
              ((c.control.describe(), c.J, c.observable) for c in certs))
    env = frontier_envelope(certs, rf["bin_width"])
    path = write_csv(_out(cfg, "frontier.csv"), ["observable_bin", "J_min", "control_params"],
                     ((b, j, c.control.describe()) for b, j, c in env))
    bad = [c for c in certs if not c.J >= 0]
    print(f"rate-frontier: {len(certs)} certificates, {len(env)} bins; wrote {path}")
    return EXIT_FAIL if bad else EXIT_OK


def cmd_laplace_compare(cfg: Config) -> int:
    zeta, grid, d = _model(cfg)
    lp, run = cfg["laplace"], cfg["run"]
    F = TerminalMassFunctional(lp["slope"], lp["offset"], lp["lower"], lp["upper"])
    lo, hi = F.range()
    if not (math.isfinite(lo) and math.isfinite(hi)):
        raise ConfigError("laplace: F must be bounded")
    family = [ControlSpec.constant(np.full(d, u), r) for u in (lp["drifts"] or (0.0,)) for r in lp["rates"]]
    if not family:
        raise ConfigError("laplace: empty control grid")
    rows, failed = [], False
    for n in lp["ns"]:
        if int(n) != n:
            raise ConfigError(f"laplace: particle count {n} is not an integer")
        rep = laplace_variational_upper(F, family, int(n), lp["replicas"], run["seed"], zeta=zeta, grid=grid,
                                        d=d, workers=run["workers"], importance=lp["importance"])
        failed |= rep.violated
        rows.append((int(n), rep.mc, rep.mc_se, rep.upper, rep.gap, rep.upper_se,
                     rep.best_control.describe(), rep.violated))
        print(f"laplace-compare: n={int(n)} mc={rep.mc:.6g}+-{rep.mc_se:.2g} upper={rep.upper:.6g} "
              f"gap={rep.gap:.4g}{' VIOLATED' if rep.violated else ''}")
    path = write_csv(_out(cfg, "laplace.csv"),
                     ["n", "mc", "se", "upper", "gap", "upper_se", "best_control", "violated"], rows)
    print(f"laplace-compare: wrote {path}")
    return EXIT_FAIL if failed else EXIT_OK


def cmd_varrep_check(cfg: Config) -> int:
    vr = cfg["varrep"]
    cases = [(LinearThresholdG(a), True) for a in vr["alphas"]]
    cases += [(ConstantG(c), True) for c in vr["constants"]]
    cases += [(g, False) for g in random_g_family(vr["random_cases"], vr["random_seed"])]
    rows, failed = [], False
    for g, exact in cases:
        r = varrep_check(g, T=vr["T"], nodes=vr["nodes"])
        bad = r.gap < -vr["tolerance"] or (exact and abs(r.gap) > vr["equality_tolerance"])
        failed |= bad
        rows.append((r.name, r.lhs, r.rhs, r.gap, r.u_star, r.rate_star, r.quadrature_error, bad))
    path = write_csv(_out(cfg, "varrep.csv"),
                     ["case", "lhs", "rhs", "gap", "u_star", "rate_star", "quadrature_error", "flagged"], rows)
    print(f"varrep-check: {len(rows)} cases, {sum(r[-1] for r in rows)} flagged; wrote {path}")
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {
    "lln-check": cmd_lln_check,
    "simulate": cmd_simulate,
    "fixed-point": cmd_fixed_point,
    "rate-frontier": cmd_rate_frontier,
    "laplace-compare": cmd_laplace_compare,
    "varrep-check": cmd_varrep_check,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="kbl", description=__doc__.splitlines()[0])
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="INI experiment file")
    common.add_argument("--seed", type=int, help="override run.seed")
    common.add_argument("--out", metavar="DIR", help="override output.dir")
    common.add_argument("--set", dest="overrides", action="append", default=[], metavar="SECTION.KEY=VALUE",
                        help="override any config field (repeatable)")
    common.add_argument("--dry-run", action="store_true", help="validate config and print the plan only")
    common.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sub.add_parser(name, parents=[common], help=fn.__name__.replace("cmd_", "").replace("_", " "))
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    overrides = list(args.overrides)
    if args.seed is not None:
        overrides.append(f"run.seed={args.seed}")
    if args.out is not None:
        overrides.append(f"output.dir={args.out}")
    try:
        cfg = load_config(args.config, overrides)
        if args.dry_run:
            print(f"# kbl {args.command} (dry run)")
            print(cfg.to_ini(), end="")
            return EXIT_OK
        return COMMANDS[args.command](cfg)
    except ConfigError as exc:
        print(f"{args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"{args.command}: I/O error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericError as exc:
        print(f"{args.command}: numeric error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
