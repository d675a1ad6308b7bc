"""Wall time of the sliced reference against the Sinkhorn solve.

Every solve runs exactly T sweeps (the tolerance is set so it never triggers).
Writes results/timing.csv.

Usage: python scripts/timing.py [--n 240] [--L 100] [--T 5000] [--repeats 3]
"""

import argparse
import csv
from pathlib import Path

from srot.bench import DATASETS, timing_study


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=240)
    ap.add_argument("--L", type=int, default=100)
    ap.add_argument("--T", type=int, default=5000)
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--eps", type=float, nargs="+", default=[1e-3, 1e-2, 1e-1])
    ap.add_argument("--out", type=Path, default=Path("results"))
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    rows = []
    for eps in args.eps:
        for ds in DATASETS:
            row = timing_study(ds, args.n, 0, args.L, eps, args.T, repeats=args.repeats, tol=1e-300)
            rows.append({"dataset": ds, "epsilon": eps, **row})
            print(f"{ds:16s} eps={eps:<6g} SOT {1e3 * row['sot_s']:7.1f} ms  Sinkhorn {1e3 * row['sinkhorn_s']:8.1f} ms"
                  f"  share {100 * row['fraction']:.2f}%")
    with open(args.out / "timing.csv", "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)


if __name__ == "__main__":
    main()
