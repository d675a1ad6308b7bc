"""Synthetic benchmarks: dataset generators, ablation sweeps, CSV/SVG output."""

from __future__ import annotations

import csv
import json
import logging
import os
import statistics
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .core import DiscreteMeasure, cost_matrix, independent_coupling, l1_error, marginal_violation
from .exact import solve_exact
from .sinkhorn import SolverConfig, solve_eot, solve_with_reference
from .sliced import SlicedConfig, sot_plan

log = logging.getLogger(__name__)

DATASETS = ("half_moons", "eight_gaussians", "two_rings")
METHODS = ("independent", "sot", "eot", "srot")

DATASET_PARAMS = {
    "half_moons": {"radius": 1.0, "noise": 0.08},
    "eight_gaussians": {"radius": 4.0, "std": 0.3},
    "two_rings": {"radii": [1.0, 2.0], "radial_noise": 0.05},
}

EPS_GRID = (1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1, 1.0)
ITER_GRID = (10, 30, 100, 300, 1000, 3000, 5000)
PROJ_GRID = (1, 5, 10, 50, 100, 500)


def generate(dataset: str, n: int, seed: int = 0, noise: float | None = None):
    """Two uniform ``n``-point clouds in the plane.

    ``noise`` overrides the dataset's default noise level (moon jitter,
    component std, or radial perturbation).
    """
    if n < 2:
        raise ValueError("n must be >= 2")
    if dataset not in DATASETS:
        raise ValueError(f"unknown dataset {dataset!r}; choose from {DATASETS}")
    rng = np.random.default_rng(seed)
    p = DATASET_PARAMS[dataset]
    if dataset == "half_moons":
        r, s = p["radius"], p["noise"] if noise is None else noise
        t = rng.uniform(0.0, np.pi, n)
        x = r * np.c_[np.cos(t), np.sin(t)] + rng.normal(0.0, s, (n, 2))
        t = rng.uniform(0.0, np.pi, n)
        y = np.c_[r - r * np.cos(t), 0.5 * r - r * np.sin(t)] + rng.normal(0.0, s, (n, 2))
    elif dataset == "eight_gaussians":
        r, s = p["radius"], p["std"] if noise is None else noise
        angles = np.arange(8) * np.pi / 4
        centers = r * np.c_[np.cos(angles), np.sin(angles)]
        clouds = []
        for _ in range(2):
            comp = rng.permutation(np.arange(n) % 8)
            clouds.append(centers[comp] + rng.normal(0.0, s, (n, 2)) if s > 0 else centers[comp])
        x, y = clouds
    else:
        s = p["radial_noise"] if noise is None else noise
        clouds = []
        for radius in p["radii"]:
            t = rng.uniform(0.0, 2 * np.pi, n)
            rad = radius + rng.normal(0.0, s, n)
            clouds.append(rad[:, None] * np.c_[np.cos(t), np.sin(t)])
        x, y = clouds
    return DiscreteMeasure.uniform(x), DiscreteMeasure.uniform(y)


@dataclass
class SweepRecord:
    dataset: str
    method: str
    epsilon: float
    iterations: int
    projections: int
    aggregation: str
    l1_vs_exact: float
    runtime_ms: float
    seed: int
    sot_ms: float = 0.0
    sinkhorn_ms: float = 0.0
    converged: bool = True
    violation: float = 0.0
    error: str = ""


@dataclass(frozen=True)
class SweepAxes:
    """Cartesian grid of the ablation. Baselines ignore the solver axes."""

    epsilons: tuple = (1e-2,)
    iterations: tuple = (5000,)
    projections: tuple = (100,)
    aggregations: tuple = ("uniform",)
    tol: float = 1e-9
    gamma: float = 1e-8
    temperature: float = 0.1
    timing_repeats: int = 1

    def __post_init__(self):
        for name in ("epsilons", "iterations", "projections", "aggregations"):
            if len(getattr(self, name)) == 0:
                raise ValueError(f"sweep axis {name!r} is empty")


def _median_time(fn, repeats):
    times, out = [], None
    for _ in range(max(1, repeats)):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return out, statistics.median(times)


def _cell_jobs(dataset, n, seed, axes: SweepAxes, methods):
    """Deterministic list of cells for one (dataset, seed) instance."""
    jobs = []
    if "independent" in methods:
        jobs.append(("independent", None, None, None, None))
    for L in axes.projections:
        for agg in axes.aggregations:
            if "sot" in methods:
                jobs.append(("sot", None, None, L, agg))
    for eps in axes.epsilons:
        for T in axes.iterations:
            if "eot" in methods:
                jobs.append(("eot", eps, T, None, None))
            for L in axes.projections:
                for agg in axes.aggregations:
                    if "srot" in methods:
                        jobs.append(("srot", eps, T, L, agg))
    return jobs


def run_instance(dataset: str, n: int, seed: int, axes: SweepAxes, methods=METHODS):
    """All sweep cells for one generated instance (shares one exact solve)."""
    mu, nu = generate(dataset, n, seed)
    C = cost_matrix(mu, nu)
    exact = solve_exact(C, mu, nu)
    if not exact.unique:
        log.warning("%s seed %d: exact plan may not be unique (min reduced cost %.3g)",
                    dataset, seed, exact.min_reduced_cost)
    records = []
    refs = {}
    for method, eps, T, L, agg in _cell_jobs(dataset, n, seed, axes, methods):
        rec = SweepRecord(dataset, method, eps if eps is not None else float("nan"),
                          T or 0, L or 0, agg or "", float("nan"), 0.0, seed)
        try:
            if method == "independent":
                plan, dt = _median_time(lambda: independent_coupling(mu, nu), axes.timing_repeats)
                rec.runtime_ms = 1e3 * dt
            elif method == "sot":
                cfg = SlicedConfig(L, agg, axes.temperature, axes.gamma, seed)
                plan, dt = _median_time(lambda: sot_plan(mu, nu, C, cfg), axes.timing_repeats)
                refs[(L, agg)] = plan
                rec.sot_ms = rec.runtime_ms = 1e3 * dt
            else:
                solver = SolverConfig(epsilon=eps, max_iter=T, tol=axes.tol)
                if method == "eot":
                    (plan, duals), dt = _median_time(lambda: solve_eot(mu, nu, C, solver), axes.timing_repeats)
                    rec.sinkhorn_ms = rec.runtime_ms = 1e3 * dt
                else:
                    cfg = SlicedConfig(L, agg, axes.temperature, axes.gamma, seed)
                    ref, t_sot = _median_time(lambda: sot_plan(mu, nu, C, cfg), axes.timing_repeats)
                    (plan, duals), t_sk = _median_time(
                        lambda: solve_with_reference(mu, nu, C, ref, solver), axes.timing_repeats)
                    rec.sot_ms, rec.sinkhorn_ms = 1e3 * t_sot, 1e3 * t_sk
                    rec.runtime_ms = rec.sot_ms + rec.sinkhorn_ms
                rec.converged = duals.converged
            rec.violation = marginal_violation(plan)
            rec.l1_vs_exact = l1_error(plan, exact.plan)
        except Exception as exc:  # per-cell failures are recorded, the sweep goes on
            rec.error = f"{type(exc).__name__}: {exc}"
            rec.converged = False
        records.append(rec)
    return records


def _run_instance_args(args):
    return run_instance(*args)


def default_workers() -> int:
    try:
        return max(1, int(os.environ.get("SROT_THREADS", "1")))
    except ValueError:
        return 1


def sweep(axes: SweepAxes, datasets=DATASETS, methods=METHODS, seeds=(0,), n: int = 240,
          workers: int | None = None) -> list[SweepRecord]:
    """Evaluate every cell; output order is the deterministic cell order."""
    if not datasets or not methods or not seeds:
        raise ValueError("datasets, methods and seeds must be non-empty")
    tasks = [(ds, n, s, axes, tuple(methods)) for ds in datasets for s in seeds]
    workers = default_workers() if workers is None else workers
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            chunks = list(pool.map(_run_instance_args, tasks))
    else:
        chunks = [run_instance(*t) for t in tasks]
    return [r for chunk in chunks for r in chunk]


def median_l1(records, **match) -> float:
    vals = [r.l1_vs_exact for r in records
            if all(getattr(r, k) == v for k, v in match.items()) and not r.error]
    if not vals:
        raise KeyError(f"no records matching {match}")
    return statistics.median(vals)


# --- output -------------------------------------------------------------------

_FIELDS = [f.name for f in fields(SweepRecord)]


def write_csv(records, path) -> None:
    if not records:
        raise ValueError("no records to write")
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("# dataset_params: " + json.dumps(DATASET_PARAMS, sort_keys=True) + "\n")
        writer = csv.DictWriter(fh, fieldnames=_FIELDS)
        writer.writeheader()
        for r in records:
            row = asdict(r)
            for k, v in row.items():
                if isinstance(v, float):
                    row[k] = repr(v)
            writer.writerow(row)


def read_csv(path) -> list[SweepRecord]:
    types = {f.name: f.type for f in fields(SweepRecord)}
    out = []
    with Path(path).open() as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    for row in csv.DictReader(lines):
        kw = {}
        for k, v in row.items():
            t = types[k]
            if t in ("int", int):
                kw[k] = int(v)
            elif t in ("float", float):
                kw[k] = float(v)
            elif t in ("bool", bool):
                kw[k] = v == "True"
            else:
                kw[k] = v
        out.append(SweepRecord(**kw))
    return out


def write_svg(records, path, x_axis: str, title: str = "") -> None:
    """Line chart of median L1-vs-exact against ``x_axis`` (log scale).

    ``x_axis`` is one of ``epsilon``, ``iterations`` or ``projections``.
    Methods that do not vary along the axis are drawn as horizontal baselines.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    if not records:
        raise ValueError("no records to plot")
    fig, ax = plt.subplots(figsize=(5, 3.5))
    groups = {}
    for r in records:
        if r.error:
            continue
        key = r.method if r.method in ("independent", "eot") else f"{r.method} ({r.aggregation})"
        groups.setdefault(key, []).append(r)
    xs_all = sorted({getattr(r, x_axis) for r in records if r.method in ("eot", "srot")}
                    or {getattr(r, x_axis) for r in records})
    for key, rs in sorted(groups.items()):
        by_x = {}
        for r in rs:
            by_x.setdefault(getattr(r, x_axis), []).append(r.l1_vs_exact)
        xs = sorted(x for x in by_x if x == x and x > 0)
        if len(xs) <= 1 and xs_all:
            y = statistics.median(v for vals in by_x.values() for v in vals)
            ax.plot([min(xs_all), max(xs_all)], [y, y], linestyle="--", label=key)
        else:
            ax.plot(xs, [statistics.median(by_x[x]) for x in xs], marker="o", label=key)
    ax.set_xscale("log")
    ax.set_xlabel(x_axis)
    ax.set_ylabel("L1 error vs exact plan")
    if title:
        ax.set_title(title)
    ax.legend(fontsize=7)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def emit(records, out_dir, formats=("csv", "svg"), figure: str = "sweep", x_axis: str = "epsilon"):
    """Write ``<figure>.csv`` and one ``<figure>_<dataset>.svg`` per dataset."""
    if not records:
        raise ValueError("no records to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    if "csv" in formats:
        path = out_dir / f"{figure}.csv"
        write_csv(records, path)
        written.append(path)
    if "svg" in formats:
        for ds in dict.fromkeys(r.dataset for r in records):
            path = out_dir / f"{figure}_{ds}.svg"
            write_svg([r for r in records if r.dataset == ds], path, x_axis, title=f"{figure}: {ds}")
            written.append(path)
    return written


def timing_study(dataset="half_moons", n=240, seed=0, projections=100, epsilon=1e-3, max_iter=5000,
                 repeats=3, tol=1e-9):
    """SOT construction vs Sinkhorn wall time (median of ``repeats``)."""
    mu, nu = generate(dataset, n, seed)
    C = cost_matrix(mu, nu)
    cfg = SlicedConfig(projections=projections, seed=seed)
    solver = SolverConfig(epsilon=epsilon, max_iter=max_iter, tol=tol)
    ref, t_sot = _median_time(lambda: sot_plan(mu, nu, C, cfg), repeats)
    (_, duals), t_sk = _median_time(lambda: solve_with_reference(mu, nu, C, ref, solver), repeats)
    return {"sot_s": t_sot, "sinkhorn_s": t_sk, "total_s": t_sot + t_sk,
            "fraction": t_sot / (t_sot + t_sk), "iterations": duals.iterations}


def with_axes(axes: SweepAxes, **changes) -> SweepAxes:
    return replace(axes, **changes)
