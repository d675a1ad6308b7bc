"""Discrete measures, transport plans and plan-quality metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

WEIGHT_SUM_TOL = 1e-6


class DimensionMismatchError(ValueError):
    pass


class AbsoluteContinuityError(ValueError):
    """Raised when a plan puts mass where the reference plan has none."""


@dataclass(frozen=True)
class DiscreteMeasure:
    """Weighted point cloud ``sum_i w_i delta_{x_i}``.

    ``atoms`` is stored as an ``(n, d)`` float array. Weights must be strictly
    positive; a total within ``WEIGHT_SUM_TOL`` of one is renormalized,
    anything further off is rejected.
    """

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=float)
        if atoms.ndim == 1:
            atoms = atoms[:, None]
        if atoms.ndim != 2 or atoms.shape[0] == 0 or atoms.shape[1] == 0:
            raise ValueError(f"atoms must be a non-empty (n, d) array, got shape {atoms.shape}")
        weights = np.asarray(self.weights, dtype=float).ravel()
        if weights.shape[0] != atoms.shape[0]:
            raise ValueError(f"{weights.shape[0]} weights for {atoms.shape[0]} atoms")
        if not np.all(np.isfinite(atoms)):
            raise ValueError("atoms must be finite")
        if not np.all(weights > 0):
            raise ValueError("weights must be strictly positive")
        total = weights.sum()
        if abs(total - 1.0) > WEIGHT_SUM_TOL:
            raise ValueError(f"weights sum to {total!r}, expected 1")
        weights = weights / total
        atoms.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, atoms) -> "DiscreteMeasure":
        atoms = np.asarray(atoms, dtype=float)
        n = atoms.shape[0]
        return cls(atoms, np.full(n, 1.0 / n))

    @property
    def n(self) -> int:
        return self.atoms.shape[0]

    @property
    def dim(self) -> int:
        return self.atoms.shape[1]

    def with_atoms(self, atoms) -> "DiscreteMeasure":
        return DiscreteMeasure(atoms, self.weights)


@dataclass
class TransportPlan:
    """Dense ``n x m`` coupling together with the marginals it should match.

    Feasibility is not enforced on construction (use
    :func:`marginal_violation`); only shapes and non-negativity are.
    """

    entries: np.ndarray
    source_weights: np.ndarray
    target_weights: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = np.asarray(self.entries, dtype=float)
        self.source_weights = np.asarray(self.source_weights, dtype=float).ravel()
        self.target_weights = np.asarray(self.target_weights, dtype=float).ravel()
        if self.entries.shape != (self.source_weights.size, self.target_weights.size):
            raise DimensionMismatchError(
                f"plan shape {self.entries.shape} does not match marginals "
                f"({self.source_weights.size}, {self.target_weights.size})"
            )
        if np.any(self.entries < 0):
            raise ValueError("transport plan entries must be non-negative")

    @property
    def shape(self):
        return self.entries.shape

    def total_mass(self) -> float:
        return float(self.entries.sum())


def _entries(plan) -> np.ndarray:
    if isinstance(plan, TransportPlan):
        return plan.entries
    return np.asarray(plan, dtype=float)


def _check_same_shape(a: np.ndarray, b: np.ndarray):
    if a.shape != b.shape:
        raise DimensionMismatchError(f"shape mismatch: {a.shape} vs {b.shape}")


def cost_matrix(source: DiscreteMeasure, target: DiscreteMeasure) -> np.ndarray:
    """Euclidean ground cost ``C_ij = ||x_i - y_j||_2``."""
    return euclidean_cost(source.atoms, target.atoms)


def euclidean_cost(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if y.ndim == 1:
        y = y[:, None]
    if x.shape[1] != y.shape[1]:
        raise DimensionMismatchError(f"dimension mismatch: {x.shape[1]} vs {y.shape[1]}")
    diff = x[:, None, :] - y[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def validate_cost(cost) -> np.ndarray:
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise ValueError("cost matrix must be 2-dimensional")
    if not np.all(np.isfinite(cost)) or np.any(cost < 0):
        raise ValueError("cost entries must be finite and non-negative")
    return cost


def independent_coupling(source: DiscreteMeasure, target: DiscreteMeasure) -> TransportPlan:
    return TransportPlan(np.outer(source.weights, target.weights), source.weights, target.weights)


def plan_cost(cost, plan) -> float:
    """Frobenius inner product ``<C, P>``."""
    cost = np.asarray(cost, dtype=float)
    entries = _entries(plan)
    _check_same_shape(cost, entries)
    return float(np.sum(cost * entries))


def kl_divergence(plan, reference) -> float:
    """``sum P log(P / Q)`` over the support of ``P`` (``0 log 0 = 0``)."""
    p = _entries(plan)
    q = _entries(reference)
    _check_same_shape(p, q)
    support = p > 0
    if np.any(q[support] <= 0):
        raise AbsoluteContinuityError("plan is not absolutely continuous w.r.t. the reference")
    ps = p[support]
    return float(np.sum(ps * np.log(ps / q[support])))


def marginal_violation(plan: TransportPlan) -> float:
    """Infinity-norm mismatch between the plan's marginals and the targets."""
    rows = np.abs(plan.entries.sum(axis=1) - plan.source_weights)
    cols = np.abs(plan.entries.sum(axis=0) - plan.target_weights)
    return float(max(rows.max(initial=0.0), cols.max(initial=0.0)))


def l1_error(plan, reference_plan) -> float:
    p = _entries(plan)
    q = _entries(reference_plan)
    _check_same_shape(p, q)
    return float(np.abs(p - q).sum())


# --- plain-text serialization -------------------------------------------------

def write_measure(measure: DiscreteMeasure, path) -> None:
    lines = [f"{measure.n} {measure.dim}"]
    for w, x in zip(measure.weights, measure.atoms):
        lines.append(" ".join(f"{v:.17g}" for v in (w, *x)))
    Path(path).write_text("\n".join(lines) + "\n")


def read_measure(path) -> DiscreteMeasure:
    rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows:
        raise ValueError(f"{path}: empty measure file")
    try:
        n, d = int(rows[0][0]), int(rows[0][1])
        data = np.array([[float(v) for v in r] for r in rows[1:]], dtype=float)
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed measure file") from exc
    if data.shape != (n, d + 1):
        raise ValueError(f"{path}: expected {n} rows of {d + 1} values, got {data.shape}")
    return DiscreteMeasure(data[:, 1:], data[:, 0])


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    matrix = np.asarray(matrix, dtype=float)
    n, m = matrix.shape
    lines = [f"{n},{m}"]
    lines.extend(",".join(f"{v:.17g}" for v in row) for row in matrix)
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix_csv(path) -> np.ndarray:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln.strip()]
    if not rows:
        raise ValueError(f"{path}: empty matrix file")
    try:
        n, m = (int(v) for v in rows[0].split(","))
        data = np.array([[float(v) for v in r.split(",")] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise ValueError(f"{path}: malformed matrix CSV") from exc
    if data.shape != (n, m):
        raise ValueError(f"{path}: header says {n}x{m}, body is {data.shape}")
    return data


def write_plan(plan: TransportPlan, path) -> None:
    write_matrix_csv(plan.entries, path)


def read_plan(path, source_weights=None, target_weights=None) -> TransportPlan:
    """Read a plan CSV; marginals default to the plan's own row/column sums."""
    entries = read_matrix_csv(path)
    if source_weights is None:
        source_weights = entries.sum(axis=1)
    if target_weights is None:
        target_weights = entries.sum(axis=0)
    return TransportPlan(entries, source_weights, target_weights)
