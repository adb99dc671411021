"""Monte Carlo cost of the constant policy u = -1 against the step size, next to the grid value.

Discrete exit detection overshoots the boundary by O(sqrt(dt)); this shows how fast that bias fades.

    python3 scripts/exit_overshoot_study.py --paths 20000 --out overshoot.csv
"""
import argparse
import csv

import numpy as np

from levyhjb.hjb import GridSpec, evaluate, solve
from levyhjb.problem import make_problem
from levyhjb.sde import estimate_cost


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--paths", type=int, default=20_000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--dt", type=float, nargs="+", default=[4e-3, 1e-3, 2.5e-4, 6.25e-5])
    ap.add_argument("--out", default="exit_overshoot.csv")
    args = ap.parse_args()
    spec = make_problem("controlled_drift_interval", {})
    w = float(evaluate(solve(spec, GridSpec(0.005)), 0.0, [0.0]))
    print(f"grid value at h=0.005: {w:.6f}")
    rows = []
    for dt in args.dt:
        est = estimate_cost(spec, np.array([-1.0]), 0.0, [0.0], args.paths, dt, args.seed)
        rows.append([dt, est.mean, est.std_error, est.mean - w])
        print(f"dt={dt:<9g} cost={est.mean:.5f} +- {est.std_error:.5f}  cost - W = {est.mean - w:+.5f}")
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["dt", "mean", "std_error", "mean_minus_grid"])
        wr.writerows([[f"{v:.16e}" for v in r] for r in rows])


if __name__ == "__main__":
    main()
