"""Eigenvalue MSE of the sample, Lawley and QuEST-based estimators as p grows at fixed p/n.

Writes a long-format CSV with one row per (p, n, estimator).
"""

from __future__ import annotations

import argparse
import csv

from quest_shrinkage.simulation import SimulationDesign, run_eigenvalue_experiment

DESIGN_1 = {"kind": "beta_shifted", "a_shift": 1.0, "scale": 10.0, "alpha": 1.0, "beta": 10.0}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--ratio", type=float, default=0.5, help="p / n")
    ap.add_argument("--dims", default="30,60,100,150", help="comma-separated p values")
    ap.add_argument("--replications", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20261018)
    ap.add_argument("--output", default="convergence.csv")
    args = ap.parse_args()

    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p", "n", "estimator", "mse"])
        for p in (int(v) for v in args.dims.split(",")):
            n = round(p / args.ratio)
            design = SimulationDesign(DESIGN_1, n=n, p=p, replications=args.replications, master_seed=args.seed)
            rep = run_eigenvalue_experiment(design, ["sample", "lawley", "quest"])
            for name, mse in rep.per_estimator_mse.items():
                w.writerow([p, n, name, repr(mse)])
            print(f"p={p} n={n}: " + ", ".join(f"{k} {v:.4f}" for k, v in rep.per_estimator_mse.items()))


if __name__ == "__main__":
    main()
