"""Regenerate the case-study data as CSV: feasible regions and the controller scenarios.

    python scripts/figures.py --outdir figures/

Files: region_<pair>.csv (+ _disk companion), setpoint_<pair>.csv with the
optimized setpoints of the post-step targets, and sim_<scenario>[_opt].csv.
"""
import argparse
from pathlib import Path

from invfeas import optimizer
from invfeas.cli import main as cli_main
from invfeas.cli import write_csv
from invfeas.model import PAIRS, InverterParams
from invfeas.simulator import default_scenarios


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--outdir", default="figures")
    ap.add_argument("--samples", type=int, default=720)
    args = ap.parse_args()
    out = Path(args.outdir)
    out.mkdir(parents=True, exist_ok=True)

    for name in PAIRS:
        cli_main(["region", "--pair", name, "--samples", str(args.samples), "--out", str(out / f"region_{name}.csv")])

    params = InverterParams()
    for sc in default_scenarios().values():
        if not sc.name.startswith("oc-"):
            continue
        target = sc.post_setpoint
        rep = optimizer.solve_sdp(params, PAIRS[sc.pair], optimizer.TrackingObjective(*target, sc.gamma))
        write_csv(out / f"setpoint_{sc.pair}.csv", {
            "target1": [target[0]], "target2": [target[1]], "s1": [rep.s1], "s2": [rep.s2],
            "i_d": [rep.i_star.d], "i_q": [rep.i_star.q], "objective": [rep.objective],
        })

    for name in default_scenarios():
        cli_main(["simulate", "--scenario", name, "--out", str(out / f"sim_{name}.csv")])
        if name.startswith("droop-"):
            cli_main(["simulate", "--scenario", name, "--optimize", "--out", str(out / f"sim_{name}_opt.csv")])


if __name__ == "__main__":
    main()
