"""RMSE of the number of retained components for the sample, population and shrinkage curves."""

from __future__ import annotations

import argparse
import csv

from quest_shrinkage.simulation import SimulationDesign, run_pca_experiment

DESIGN_1 = {"kind": "beta_shifted", "a_shift": 1.0, "scale": 10.0, "alpha": 1.0, "beta": 10.0}


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--cells", default="200x100,100x200", help="comma-separated NxP cells")
    ap.add_argument("--targets", default="0.7,0.8,0.9")
    ap.add_argument("--replications", type=int, default=100)
    ap.add_argument("--seed", type=int, default=20261018)
    ap.add_argument("--output", default="pca_rmse.csv")
    args = ap.parse_args()
    targets = [float(q) for q in args.targets.split(",")]

    with open(args.output, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["n", "p", "basis", "q", "rmse"])
        for cell in args.cells.split(","):
            n, p = (int(v) for v in cell.lower().split("x"))
            design = SimulationDesign(DESIGN_1, n=n, p=p, replications=args.replications, master_seed=args.seed)
            rep = run_pca_experiment(design, targets)
            for key, value in rep.pca_rmse.items():
                basis, q = key.split("@")
                w.writerow([n, p, basis, q, repr(value)])
            for q in targets:
                row = {b: rep.pca_rmse[f"{b}@{q:g}"] for b in ("sample", "population", "shrinkage")}
                print(f"n={n} p={p} q={q:g}: " + ", ".join(f"{k} {v:.2f}" for k, v in row.items()))


if __name__ == "__main__":
    main()
