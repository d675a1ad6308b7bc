"""SROT accuracy against the number of projections L for the three aggregation rules.

Writes results/fig_proj.{csv,svg}.

Usage: python scripts/sweep_projections.py [--seeds 5] [--n 240] [--eps 0.01] [--out results]
"""

import argparse
from pathlib import Path

from srot.bench import DATASETS, PROJ_GRID, SweepAxes, emit, median_l1, sweep
from srot.sliced import AGGREGATIONS


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--n", type=int, default=240)
    ap.add_argument("--eps", type=float, default=1e-2)
    ap.add_argument("--out", type=Path, default=Path("results"))
    ap.add_argument("--workers", type=int, default=None)
    args = ap.parse_args()
    axes = SweepAxes(epsilons=(args.eps,), iterations=(5000,), projections=PROJ_GRID, aggregations=AGGREGATIONS)
    records = sweep(axes, DATASETS, seeds=tuple(range(args.seeds)), n=args.n, workers=args.workers)
    emit(records, args.out, figure="fig_proj", x_axis="projections")
    for ds in DATASETS:
        for agg in AGGREGATIONS:
            row = "  ".join(f"L={L}: {median_l1(records, dataset=ds, method='srot', projections=L, aggregation=agg):.4f}"
                            for L in PROJ_GRID)
            print(f"{ds:16s} {agg:8s} {row}")


if __name__ == "__main__":
    main()
