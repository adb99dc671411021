"""Grid-halving table for W(0, x): the data behind the first-order solver tolerance.

    python3 scripts/grid_convergence.py --family controlled_drift_interval --x 0.0 --out convergence.csv
"""
import argparse
import csv

import numpy as np

from levyhjb.hjb import GridSpec, evaluate, solve
from levyhjb.problem import make_problem


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--family", default="controlled_drift_interval")
    ap.add_argument("--x", type=float, nargs="+", default=[0.0])
    ap.add_argument("--h", type=float, nargs="+", default=[0.08, 0.04, 0.02, 0.01, 0.005])
    ap.add_argument("--out", default="grid_convergence.csv")
    args = ap.parse_args()
    spec = make_problem(args.family, {})
    x = np.asarray(args.x, dtype=float)
    rows, prev = [], None
    for h in args.h:
        fld = solve(spec, GridSpec(h))
        w = float(evaluate(fld, 0.0, x))
        rows.append([h, fld.dt, w, abs(w - prev) if prev is not None else float("nan")])
        print(f"h={h:<8g} dt={fld.dt:.3e}  W={w:.10f}  change={rows[-1][3]:.3e}")
        prev = w
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["h", "dt", "W", "change_from_previous"])
        wr.writerows([[f"{v:.16e}" for v in r] for r in rows])


if __name__ == "__main__":
    main()
