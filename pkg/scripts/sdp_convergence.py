"""Objective history of the lifted solver and Frank-Wolfe on one tracking problem.

    python scripts/sdp_convergence.py --pair pv2 --target 850 14400 --out conv.csv
"""
import argparse

import numpy as np

from invfeas import optimizer
from invfeas.cli import parse_pair, write_csv
from invfeas.model import InverterParams


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--pair", default="pv2")
    ap.add_argument("--target", type=float, nargs=2, default=[850.0, 14400.0])
    ap.add_argument("--gamma", type=float, default=1.0)
    ap.add_argument("--out", default="conv.csv")
    args = ap.parse_args()

    params = InverterParams()
    pair = parse_pair(args.pair)
    obj = optimizer.TrackingObjective(*args.target, args.gamma)
    sdp = optimizer.solve_sdp(params, pair, obj)
    fw = optimizer.solve_frank_wolfe(params, pair, obj)
    n = max(len(sdp.history), len(fw.history))
    pad = lambda h, j: np.array([x[j] for x in h] + [np.nan] * (n - len(h)))
    write_csv(args.out, {"iteration": np.arange(n), "sdp_objective": pad(sdp.history, 0),
                         "fw_objective": pad(fw.history, 0), "fw_gap": pad(fw.history, 1)})
    print(f"sdp: {sdp.objective:.10g} after {sdp.iterations} iterations (rank-1 residual {sdp.rank1_residual:.1e})")
    print(f"fw:  {fw.objective:.10g} after {fw.iterations} iterations")


if __name__ == "__main__":
    main()
