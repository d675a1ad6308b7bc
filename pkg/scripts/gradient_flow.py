"""Gradient flows driven by the SROT and Sinkhorn divergences between two Gaussian blobs.

Writes results/flow/<kind>_seed<k>_wasserstein.csv plus a summary plot of the
exact Wasserstein distance to the target along each flow.

Usage: python scripts/gradient_flow.py [--n 50] [--seeds 5] [--steps 100] [--eps 0.5 0.01]

Exact Wasserstein evaluation dominates the cost for large n; raise --stride
(e.g. --n 1000 --stride 50) to evaluate less often.
"""

import argparse
import statistics
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt

from srot.flow import FlowConfig, gaussian_blobs, run_flow, write_trajectory
from srot.sinkhorn import SolverConfig
from srot.sliced import SlicedConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=50)
    ap.add_argument("--seeds", type=int, default=5)
    ap.add_argument("--steps", type=int, default=100)
    ap.add_argument("--eta", type=float, default=0.05)
    ap.add_argument("--stride", type=int, default=5)
    ap.add_argument("--eps", type=float, nargs="+", default=[0.5, 0.01])
    ap.add_argument("--out", type=Path, default=Path("results") / "flow")
    args = ap.parse_args()
    args.out.mkdir(parents=True, exist_ok=True)
    fig, axes = plt.subplots(1, len(args.eps), figsize=(5 * len(args.eps), 3.5), squeeze=False)
    for ax, eps in zip(axes[0], args.eps):
        for kind in ("srot", "sinkhorn"):
            curves = []
            for seed in range(args.seeds):
                source, target = gaussian_blobs(args.n, seed)
                cfg = FlowConfig(step_size=args.eta, steps=args.steps, divergence=kind,
                                 solver=SolverConfig(epsilon=eps), sliced=SlicedConfig(seed=seed),
                                 stride=args.stride)
                traj = run_flow(source, target, cfg)
                write_trajectory(traj, args.out, prefix=f"{kind}_eps{eps:g}_seed{seed}", snapshots=False)
                curves.append(traj.wasserstein)
                steps = traj.evaluation_steps
            median = [statistics.median(c[i] for c in curves) for i in range(len(steps))]
            ax.plot(steps, median, marker=".", label=kind)
            print(f"eps={eps:g} {kind:8s} median W1: start {median[0]:.4f}  final {median[-1]:.4f}")
        ax.set_title(f"eps = {eps:g}, n = {args.n}")
        ax.set_xlabel("step")
        ax.set_ylabel("exact W1 to target")
        ax.legend()
    fig.tight_layout()
    fig.savefig(args.out / "flow_wasserstein.svg")


if __name__ == "__main__":
    main()
