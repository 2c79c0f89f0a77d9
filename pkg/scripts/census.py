"""Solver agreement and rank-1 census over randomized tracking instances.

    python scripts/census.py --n 200 --seed 20240614 --out census.csv

Writes one row per instance and prints a summary.
"""
import argparse
import time

import numpy as np

from invfeas import optimizer
from invfeas.cli import write_csv
from invfeas.verify import objectives_agree, random_instances

PAIR_CODE = {"pq": 0, "pv2": 1, "qv2": 2}


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=200)
    ap.add_argument("--seed", type=int, default=20240614)
    ap.add_argument("--grid", type=int, default=201)
    ap.add_argument("--out", default="census.csv")
    args = ap.parse_args()

    insts = random_instances(np.random.default_rng(args.seed), args.n)
    cols = {k: [] for k in ("k", "pair", "feasible", "gamma", "sdp", "fw", "grid", "agree", "raw_rank1", "final_rank1", "t_sdp", "t_fw", "t_grid")}
    for k, inst in enumerate(insts):
        t = [time.perf_counter()]
        sdp = optimizer.solve_sdp(inst.params, inst.pair, inst.objective)
        t.append(time.perf_counter())
        fw = optimizer.solve_frank_wolfe(inst.params, inst.pair, inst.objective)
        t.append(time.perf_counter())
        bf = optimizer.brute_force(inst.params, inst.pair, inst.objective, grid_n=args.grid)
        t.append(time.perf_counter())
        agree = all(objectives_agree(a.objective, b.objective) for a, b in ((sdp, fw), (sdp, bf), (fw, bf)))
        name = "".join(q.value.lower() for q in inst.pair)
        row = (k, PAIR_CODE[name], inst.feasible, inst.objective.gamma, sdp.objective, fw.objective, bf.objective,
               agree, sdp.raw_rank1_residual, sdp.rank1_residual, t[1] - t[0], t[2] - t[1], t[3] - t[2])
        for key, val in zip(cols, row):
            cols[key].append(float(val))
    write_csv(args.out, cols)

    n = args.n
    feas = np.array(cols["feasible"], dtype=bool)
    raw = np.array(cols["raw_rank1"]) <= 1e-6
    print(f"agreement: {int(sum(cols['agree']))}/{n}")
    print(f"rank-1 without regularization: {int(raw.sum())}/{n} (feasible {int(raw[feas].sum())}/{int(feas.sum())}, infeasible {int(raw[~feas].sum())}/{int((~feas).sum())})")
    print(f"rank-1 after fallback: {int(np.sum(np.array(cols['final_rank1']) <= 1e-6))}/{n}")
    print(f"time: sdp {sum(cols['t_sdp']):.1f}s, fw {sum(cols['t_fw']):.1f}s, grid {sum(cols['t_grid']):.1f}s")


if __name__ == "__main__":
    main()
