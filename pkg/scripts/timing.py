"""Wall-clock cost of one QuEST evaluation, one analytic Jacobian and one full estimate, by p."""

from __future__ import annotations

import argparse
import time

import numpy as np

from quest_shrinkage import ConcentrationContext, estimate_spectrum, quest_jacobian, quest_quantiles
from quest_shrinkage.simulation import make_beta_spectrum, simulate_sample


def _clock(fn, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--dims", default="50,100,200,400")
    ap.add_argument("--ratio", type=float, default=0.5)
    args = ap.parse_args()
    quest_quantiles(np.ones(10), ConcentrationContext(20, 10))  # compile kernels
    print(f"{'p':>5} {'Q(t) s':>9} {'J(t) s':>9} {'fit s':>9}")
    for p in (int(v) for v in args.dims.split(",")):
        ctx = ConcentrationContext(round(p / args.ratio), p)
        tau = make_beta_spectrum(1, 10, 1, 10, p)
        lam = simulate_sample(tau, ctx, seed=0).eigenvalues
        tq = _clock(lambda: quest_quantiles(tau, ctx))
        tj = _clock(lambda: quest_jacobian(tau, ctx, method="analytic"))
        tf = _clock(lambda: estimate_spectrum(lam, ctx), repeat=1)
        print(f"{p:>5} {tq:>9.4f} {tj:>9.4f} {tf:>9.2f}")


if __name__ == "__main__":
    main()
