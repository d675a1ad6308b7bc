"""Sliced-OT reference plans.

Each random direction projects both clouds to the line, where the optimal
plan is the north-west-corner coupling of the sorted weights. That 1D plan
is lifted back to the original atom indices, and the lifted plans are
averaged (uniformly, by a softmin of their 1D cost, or by keeping the
cheapest) and finally mixed with the independent coupling.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass
from typing import NamedTuple

import numpy as np

from .core import DimensionMismatchError, DiscreteMeasure, TransportPlan, plan_cost

AGGREGATIONS = ("uniform", "softmin", "min")


@dataclass(frozen=True)
class SlicedConfig:
    projections: int = 100
    aggregation: str = "uniform"
    temperature: float = 0.1
    gamma: float = 1e-8
    seed: int = 0

    def __post_init__(self):
        if self.projections < 1:
            raise ValueError("projections must be >= 1")
        if self.aggregation not in AGGREGATIONS:
            raise ValueError(f"aggregation must be one of {AGGREGATIONS}, got {self.aggregation!r}")
        if not self.temperature > 0:
            raise ValueError("softmin temperature must be positive")
        if not 0.0 <= self.gamma <= 1.0:
            raise ValueError("gamma must lie in [0, 1]")

    def metadata(self) -> dict:
        meta = asdict(self)
        meta["softmin_cost"] = "projected_1d"
        meta["min_cost"] = "lifted"
        return meta


class Projection(NamedTuple):
    values: np.ndarray  # sorted projected values
    weights: np.ndarray  # weights in sorted order
    order: np.ndarray  # order[r] = original index of rank r


class OneDPlan(NamedTuple):
    source_rank: np.ndarray
    target_rank: np.ndarray
    mass: np.ndarray


def sample_directions(config: SlicedConfig, dim: int) -> np.ndarray:
    """``(L, dim)`` unit vectors from normalized Gaussian draws.

    Uses a Philox (counter-based) generator keyed by ``config.seed``.
    """
    if dim < 1:
        raise ValueError("dimension must be >= 1")
    rng = np.random.Generator(np.random.Philox(config.seed))
    draws = rng.standard_normal((config.projections, dim))
    norms = np.linalg.norm(draws, axis=1, keepdims=True)
    return draws / norms


def project(measure: DiscreteMeasure, direction) -> Projection:
    direction = np.asarray(direction, dtype=float)
    if direction.shape != (measure.dim,):
        raise DimensionMismatchError(f"direction of shape {direction.shape} for {measure.dim}-d atoms")
    values = measure.atoms @ direction
    # Stable sort: ties keep original index order.
    order = np.argsort(values, kind="stable")
    return Projection(values[order], measure.weights[order], order)


def one_d_plan(source_weights, target_weights) -> OneDPlan:
    """North-west-corner coupling of two weight sequences given in sorted order."""
    a = np.asarray(source_weights, dtype=float)
    b = np.asarray(target_weights, dtype=float)
    n, m = a.size, b.size
    rows, cols, masses = [], [], []
    i = j = 0
    ra, rb = float(a[0]), float(b[0])
    while i < n and j < m:
        x = min(ra, rb)
        if x > 0:
            rows.append(i)
            cols.append(j)
            masses.append(x)
        ra -= x
        rb -= x
        if ra <= 0:
            i += 1
            if i < n:
                ra = float(a[i])
        if rb <= 0:
            j += 1
            if j < m:
                rb = float(b[j])
    return OneDPlan(np.array(rows, dtype=int), np.array(cols, dtype=int), np.array(masses))


def lift_plan(plan1d: OneDPlan, source_order, target_order, shape,
              source_weights=None, target_weights=None) -> TransportPlan:
    """Scatter a rank-indexed 1D plan into the original ``(n, m)`` indexing.

    Marginals default to the lifted plan's own row and column sums.
    """
    n, m = shape
    source_order = np.asarray(source_order)
    target_order = np.asarray(target_order)
    entries = np.zeros(n * m)
    flat = source_order[plan1d.source_rank] * m + target_order[plan1d.target_rank]
    np.add.at(entries, flat, plan1d.mass)
    entries = entries.reshape(n, m)
    a = entries.sum(axis=1) if source_weights is None else source_weights
    b = entries.sum(axis=0) if target_weights is None else target_weights
    return TransportPlan(entries, a, b)


def lifted_cost(cost, lifted: TransportPlan) -> float:
    return plan_cost(cost, lifted)


def smooth_reference(plan: TransportPlan, gamma: float) -> TransportPlan:
    """``(1 - gamma) * plan + gamma * (a b^T)``."""
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    a, b = plan.source_weights, plan.target_weights
    if gamma == 0.0:
        entries = plan.entries.copy()
    elif gamma == 1.0:
        entries = np.outer(a, b)
    else:
        entries = (1.0 - gamma) * plan.entries + gamma * np.outer(a, b)
    return TransportPlan(entries, a, b, dict(plan.meta, gamma=gamma))


def _uniform(w: np.ndarray) -> bool:
    return bool(np.all(w == w[0]))


def sliced_plans(source: DiscreteMeasure, target: DiscreteMeasure, config: SlicedConfig):
    """Per-direction sparse lifted plans and their projected 1D costs.

    Returns a list of ``(rows, cols, mass)`` triples in original indexing and
    an array of 1D transport costs, one per direction.
    """
    if source.dim != target.dim:
        raise DimensionMismatchError(f"dimension mismatch: {source.dim} vs {target.dim}")
    directions = sample_directions(config, source.dim)
    # With uniform weights the rank coupling is the same for every direction.
    fixed = None
    if _uniform(source.weights) and _uniform(target.weights):
        fixed = one_d_plan(source.weights, target.weights)
    lifted, costs_1d = [], np.empty(len(directions))
    for l, theta in enumerate(directions):
        ps = project(source, theta)
        pt = project(target, theta)
        p1 = fixed if fixed is not None else one_d_plan(ps.weights, pt.weights)
        costs_1d[l] = np.sum(p1.mass * np.abs(ps.values[p1.source_rank] - pt.values[p1.target_rank]))
        lifted.append((ps.order[p1.source_rank], pt.order[p1.target_rank], p1.mass))
    return lifted, costs_1d


def aggregation_weights(config: SlicedConfig, costs_1d, costs_lifted) -> np.ndarray:
    L = len(costs_1d)
    if config.aggregation == "uniform":
        w = np.ones(L)
    elif config.aggregation == "softmin":
        z = -np.asarray(costs_1d) / config.temperature
        w = np.exp(z - z.max())
    else:
        w = np.zeros(L)
        w[int(np.argmin(costs_lifted))] = 1.0
    return w / w.sum()


def sot_plan(source: DiscreteMeasure, target: DiscreteMeasure, cost, config: SlicedConfig,
             smooth: bool = True) -> TransportPlan:
    """Aggregated sliced plan, smoothed by ``config.gamma`` unless ``smooth=False``."""
    cost = np.asarray(cost, dtype=float)
    n, m = source.n, target.n
    if cost.shape != (n, m):
        raise DimensionMismatchError(f"cost shape {cost.shape} vs measures ({n}, {m})")
    lifted, costs_1d = sliced_plans(source, target, config)
    costs_lifted = np.array([np.sum(mass * cost[r, c]) for r, c, mass in lifted])
    w = aggregation_weights(config, costs_1d, costs_lifted)
    entries = np.zeros((n, m))
    # Fixed accumulation order l = 0..L-1.
    for wl, (r, c, mass) in zip(w, lifted):
        if wl == 0.0:
            continue
        np.add.at(entries, (r, c), wl * mass)
    meta = config.metadata()
    plan = TransportPlan(entries, source.weights, target.weights, meta)
    if smooth:
        return smooth_reference(plan, config.gamma)
    return plan
