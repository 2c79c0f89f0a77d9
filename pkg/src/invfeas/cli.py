"""``invfeas`` command line: region, optimize, simulate, verify.

Exit codes: 0 success, 1 verify failure, 2 usage or config error,
3 solver did not converge, 4 non-finite simulation state.
"""
from __future__ import annotations

import argparse
import dataclasses
import csv
import math
import sys
from pathlib import Path

import numpy as np

from . import optimizer, region, verify
from .config import ConfigError, load_config
from .model import P, PAIRS, Q, V2, SingularPair, check_pair
from .simulator import run_scenario

EXIT_OK, EXIT_VERIFY, EXIT_USAGE, EXIT_NOT_CONVERGED, EXIT_NONFINITE = 0, 1, 2, 3, 4

_TOKENS = {"p": P, "q": Q, "v2": V2}


class UsageError(Exception):
    pass


def parse_pair(text: str):
    """'pq' | 'pv2' | 'qv2' (also the reversed spellings and repeated tokens, which fail)."""
    key = text.strip().lower()
    if key in PAIRS:
        return PAIRS[key]
    for head in ("v2", "p", "q"):
        if key.startswith(head) and key[len(head):] in _TOKENS:
            pair = (_TOKENS[head], _TOKENS[key[len(head):]])
            try:
                return check_pair(pair)
            except ValueError as exc:
                raise UsageError(str(exc)) from None
    raise UsageError(f"unknown quantity pair {text!r}; expected one of {', '.join(PAIRS)}")


# --------------------------------------------------------------------------- CSV


def write_csv(path, columns: dict) -> int:
    """Write equal-length numeric columns with 17 significant digits; returns the row count."""
    names = list(columns)
    data = [np.asarray(columns[n], dtype=float) for n in names]
    n = len(data[0]) if data else 0
    if any(len(d) != n for d in data):
        raise ValueError("columns differ in length")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in zip(*data):
            w.writerow(["%.17g" % v for v in row])
    return n


def read_csv(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    names = rows[0]
    data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float).reshape(-1, len(names))
    return {n: data[:, k] for k, n in enumerate(names)}


def _companion(path: Path, suffix: str) -> Path:
    return path.with_name(path.stem + suffix + path.suffix)


# --------------------------------------------------------------------------- commands


def cmd_region(cfg, pair, n_samples: int, out) -> int:
    poly = region.boundary(cfg.inverter, pair, n_samples)
    print(f"{len(poly)} boundary points, convex={poly.is_convex()}")
    if out is not None:
        out = Path(out)
        write_csv(out, {"s1": poly.s1, "s2": poly.s2, "i_d": poly.preimages[:, 0], "i_q": poly.preimages[:, 1]})
        a = 2 * np.pi * np.arange(n_samples) / n_samples
        i_max = cfg.inverter.i_max
        write_csv(_companion(out, "_disk"), {"angle": a, "i_d": i_max * np.cos(a), "i_q": i_max * np.sin(a)})
    return EXIT_OK


def _render_report(rep: optimizer.SolveReport) -> str:
    rows = [
        ("method", rep.method.value),
        ("s1", rep.s1),
        ("s2", rep.s2),
        ("i_d", rep.i_star.d),
        ("i_q", rep.i_star.q),
        ("i_mag", rep.i_star.magnitude),
        ("objective", rep.objective),
        ("rank1_residual", rep.rank1_residual),
        ("raw_rank1_residual", rep.raw_rank1_residual),
        ("regularized", rep.regularized),
        ("degraded", rep.degraded),
        ("iterations", rep.iterations),
        ("converged", rep.converged),
    ]
    return "".join(f"{k} = {v if isinstance(v, (str, bool, int)) else '%.17g' % v}\n" for k, v in rows)


def _write_history(out, rep) -> None:
    hist = rep.history or [(rep.objective, math.nan)]
    write_csv(
        out,
        {
            "iteration": np.arange(len(hist)),
            "objective": [h[0] for h in hist],
            "gap": [h[1] for h in hist],
        },
    )


def cmd_optimize(cfg, pair, target, gamma: float, method: str, out) -> int:
    if gamma < 0 or not math.isfinite(gamma):
        raise UsageError("--gamma must be a finite number >= 0")
    obj = optimizer.TrackingObjective(float(target[0]), float(target[1]), float(gamma))
    try:
        rep = optimizer.solve(cfg.inverter, pair, obj, method)
    except optimizer.NotConverged as exc:
        sys.stdout.write(_render_report(exc.report))
        print(f"error: {exc}", file=sys.stderr)
        if out is not None:
            _write_history(out, exc.report)
        return EXIT_NOT_CONVERGED
    sys.stdout.write(_render_report(rep))
    if out is not None:
        _write_history(out, rep)
    return EXIT_OK


def cmd_simulate(cfg, name: str, optimize: bool, out) -> int:
    if name not in cfg.scenarios:
        raise UsageError(f"unknown scenario {name!r}; available: {', '.join(cfg.scenarios)}")
    sc = cfg.scenarios[name]
    if optimize:
        sc = dataclasses.replace(sc, optimize_setpoints=True)
    traj = run_scenario(cfg.inverter, sc, cfg.sim, cfg.droop, cfg.oc)
    if out is not None:
        write_csv(out, traj.columns())
    i_max = cfg.inverter.i_max
    window = traj.t >= traj.t[-1] - 0.1 - 1e-12
    print(f"scenario = {sc.name}")
    print(f"controller = {sc.controller.value}")
    pre = traj.setpoints[0]
    print(f"setpoint_pre = {pre[0]:.17g} {pre[1]:.17g}")
    post = traj.setpoints[1]
    print(f"setpoint_post = {post[0]:.17g} {post[1]:.17g}")
    print(f"samples = {len(traj.t)}")
    print(f"max_i_mag = {float(np.max(traj.i_mag)):.17g}")
    print(f"final_mean_i_mag = {float(np.mean(traj.i_mag[window])):.17g}")
    print(f"i_max = {i_max:.17g}")
    if traj.nonfinite:
        print("error: simulation state became non-finite or left its domain", file=sys.stderr)
        return EXIT_NONFINITE
    return EXIT_OK


def cmd_verify(seed: int, out, inject_fault: bool = False) -> int:
    results = verify.run_all(seed, inject_fault=inject_fault)
    text = verify.format_report(results, seed)
    sys.stdout.write(text)
    if out is not None:
        Path(out).write_text(text)
    return EXIT_OK if all(r.passed for r in results) else EXIT_VERIFY


# --------------------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="TOML config (defaults used when omitted)")
    common.add_argument("--out", metavar="PATH", help="output file")

    p = _Parser(prog="invfeas", description="Feasible output regions and safe setpoints for current-limited inverters.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("region", parents=[common], help="sample the boundary of a feasible output region")
    r.add_argument("--pair", default="pq")
    r.add_argument("--samples", type=int, default=360)

    o = sub.add_parser("optimize", parents=[common], help="closest feasible setpoint to a target")
    o.add_argument("--pair", default="pq")
    o.add_argument("--target", type=float, nargs=2, metavar=("S1", "S2"), required=True)
    o.add_argument("--gamma", type=float, default=1.0)
    o.add_argument("--method", choices=[m.value for m in optimizer.Method], default="sdp")

    s = sub.add_parser("simulate", parents=[common], help="run a controller scenario")
    s.add_argument("--scenario", required=True)
    s.add_argument("--optimize", action="store_true", help="command the optimiser's setpoints")

    v = sub.add_parser("verify", parents=[common], help="run the consistency suites")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--inject-fault", action="store_true", help=argparse.SUPPRESS)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.command == "region":
            if args.samples < 4:
                raise UsageError("--samples must be at least 4")
            return cmd_region(cfg, parse_pair(args.pair), args.samples, args.out)
        if args.command == "optimize":
            return cmd_optimize(cfg, parse_pair(args.pair), args.target, args.gamma, args.method, args.out)
        if args.command == "simulate":
            return cmd_simulate(cfg, args.scenario, args.optimize, args.out)
        return cmd_verify(args.seed, args.out, args.inject_fault)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SingularPair as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    raise SystemExit(main())
