"""Plan accuracy against eps and against the iteration budget T on the synthetic datasets.

Writes results/fig_eps.{csv,svg} and results/fig_iter.{csv,svg}: median L1 error
to the exact plan for the independent, SOT, EOT and SROT plans.

Usage: python scripts/sweep_epsilon_iterations.py [--seeds 5] [--n 240] [--out results]
"""

import argparse
from pathlib import Path

from srot.bench import DATASETS, EPS_GRID, ITER_GRID, SweepAxes, emit, median_l1, sweep


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--n", type=int, default=240)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    seeds = tuple(range(args.seeds))
    studies = {"eps": (SweepAxes(epsilons=EPS_GRID, iterations=(5000,)), "epsilon"),
               "iter": (SweepAxes(epsilons=(1e-2,), iterations=ITER_GRID), "iterations")}
    for name, (axes, x_axis) in studies.items():
        records = sweep(axes, DATASETS, seeds=seeds, n=args.n, workers=args.workers)
        emit(records, args.out, figure=f"fig_{name}", x_axis=x_axis)
        for ds in DATASETS:
            for value in getattr(axes, "epsilons" if name == "eps" else "iterations"):
                match = {x_axis: value}
                print(f"{name} {ds:16s} {x_axis}={value:<8g} EOT {median_l1(records, dataset=ds, method='eot', **match):.4f}"
                      f"  SROT {median_l1(records, dataset=ds, method='srot', **match):.4f}")


if __name__ == "__main__":
    main()
