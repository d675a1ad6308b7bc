"""Gradient flows of a point cloud driven by a debiased OT divergence.

Positions follow the explicit Euler scheme ``X <- X - eta * n * grad D(X, Y)``.
Gradients hold every transport plan and every reference plan fixed at the
current iterate (envelope theorem at the optimal plans), so only the cost
matrix is differentiated:

    d/dx_i <C(X, Y), P> = sum_j P_ij (x_i - y_j) / max(|x_i - y_j|, delta)
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import DiscreteMeasure, TransportPlan, euclidean_cost, independent_coupling, write_measure
from .divergence import regularized_value
from .exact import solve_exact
from .sinkhorn import SolverConfig, solve_self, solve_with_reference
from .sliced import SlicedConfig, sot_plan

KINDS = ("srot", "sinkhorn", "exact")


class FlowWarning(UserWarning):
    """An inner Sinkhorn solve stopped before reaching its tolerance."""


@dataclass(frozen=True)
class FlowConfig:
    step_size: float = 0.05
    steps: int = 100
    divergence: str = "srot"
    solver: SolverConfig = field(default_factory=lambda: SolverConfig(epsilon=0.5))
    sliced: SlicedConfig = field(default_factory=SlicedConfig)
    stride: int = 1
    # Guard for the non-differentiable distance at coincident points.
    delta: float = 1e-12
    max_norm: float = 1e6

    def __post_init__(self):
        if not self.step_size > 0:
            raise ValueError("step_size must be positive")
        if self.steps < 0:
            raise ValueError("steps must be >= 0")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.divergence not in KINDS:
            raise ValueError(f"divergence must be one of {KINDS}")
        if not self.delta > 0:
            raise ValueError("delta must be positive")


@dataclass(frozen=True)
class References:
    """Reference plans frozen for one flow step (``None`` for the exact kind)."""

    cross: TransportPlan | None
    self_source: TransportPlan | None


@dataclass
class FlowTrajectory:
    snapshots: list
    wasserstein: list
    evaluation_steps: list
    unconverged_solves: int = 0
    aborted: bool = False
    metadata: dict = field(default_factory=dict)


def cost_gradient(x, y, plan, delta: float = 1e-12) -> np.ndarray:
    """Gradient in ``x`` of ``<C(x, y), P>`` for the Euclidean cost."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    P = plan.entries if isinstance(plan, TransportPlan) else np.asarray(plan, dtype=float)
    diff = x[:, None, :] - y[None, :, :]
    W = P / np.maximum(np.sqrt(np.einsum("ijk,ijk->ij", diff, diff)), delta)
    # Summing explicit differences keeps coincident pairs at exactly zero; the
    # expanded form W.sum(1) x - W y cancels catastrophically when W ~ P / delta.
    return np.einsum("ij,ijk->ik", W, diff)


def _measure(points, like: DiscreteMeasure | None = None) -> DiscreteMeasure:
    points = np.asarray(points, dtype=float)
    if like is not None and like.n == points.shape[0]:
        return like.with_atoms(points)
    return DiscreteMeasure.uniform(points)


def references(points, target: DiscreteMeasure, config: FlowConfig) -> References:
    x = _measure(points)
    if config.divergence == "exact":
        return References(None, None)
    if config.divergence == "sinkhorn":
        return References(independent_coupling(x, target), independent_coupling(x, x))
    cross = sot_plan(x, target, euclidean_cost(x.atoms, target.atoms), config.sliced)
    self_ref = sot_plan(x, x, euclidean_cost(x.atoms, x.atoms), config.sliced)
    return References(cross, self_ref)


def _terms(points, target, config: FlowConfig, refs: References):
    """Solve the position-dependent terms; returns ``(value, cross_plan, self_plan, converged)``."""
    x = _measure(points)
    C = euclidean_cost(x.atoms, target.atoms)
    if config.divergence == "exact":
        sol = solve_exact(C, x, target)
        return sol.cost, sol.plan, None, True
    eps = config.solver.epsilon
    if np.array_equal(x.atoms, target.atoms) and np.array_equal(x.weights, target.weights):
        P, d1 = solve_self(x, C, refs.cross, config.solver)
    else:
        P, d1 = solve_with_reference(x, target, C, refs.cross, config.solver)
    Cs = euclidean_cost(x.atoms, x.atoms)
    Q, d2 = solve_self(x, Cs, refs.self_source, config.solver)
    value = regularized_value(C, P, refs.cross, eps) - 0.5 * regularized_value(Cs, Q, refs.self_source, eps)
    return value, P, Q, d1.converged and d2.converged


def flow_objective(points, target: DiscreteMeasure, config: FlowConfig, refs: References | None = None) -> float:
    """The part of the divergence that depends on ``points``.

    ``OT(X, Y) - OT(X, X) / 2``; the ``OT(Y, Y)`` term is constant in ``X``.
    For the exact kind this is the plain OT cost.
    """
    if refs is None:
        refs = references(points, target, config)
    return _terms(points, target, config, refs)[0]


def _gradient(points, target, config: FlowConfig, refs: References | None):
    points = np.asarray(points, dtype=float)
    if refs is None:
        refs = references(points, target, config)
    _, P, Q, converged = _terms(points, target, config, refs)
    grad = cost_gradient(points, target.atoms, P, config.delta)
    if Q is not None:
        # Both argument slots of C(X, X) move with X.
        Qe = Q.entries
        grad -= 0.5 * (cost_gradient(points, points, Qe, config.delta)
                       + cost_gradient(points, points, Qe.T, config.delta))
    return grad, converged


def flow_gradient(points, target: DiscreteMeasure, config: FlowConfig,
                  refs: References | None = None) -> np.ndarray:
    """Envelope gradient of the divergence with respect to the atom positions.

    References are built at ``points`` unless given. A :class:`FlowWarning`
    is emitted if an inner solve did not converge; the gradient is still
    returned.
    """
    grad, converged = _gradient(points, target, config, refs)
    if not converged:
        warnings.warn("inner Sinkhorn solve did not converge; gradient is approximate", FlowWarning,
                      stacklevel=2)
    return grad


def central_difference(func, x, h: float) -> np.ndarray:
    """Coordinate-wise ``(f(x + h e) - f(x - h e)) / 2h``."""
    if not h > 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    grad = np.empty_like(x)
    for idx in np.ndindex(x.shape):
        xp = x.copy()
        xm = x.copy()
        xp[idx] += h
        xm[idx] -= h
        grad[idx] = (func(xp) - func(xm)) / (2 * h)
    return grad


def finite_difference_gradient(points, target: DiscreteMeasure, config: FlowConfig, h: float = 1e-5,
                               refs: References | None = None) -> np.ndarray:
    """Central differences of :func:`flow_objective` with the references frozen at ``points``."""
    if refs is None:
        refs = references(points, target, config)
    return central_difference(lambda p: flow_objective(p, target, config, refs), points, h)


def wasserstein(points, target: DiscreteMeasure) -> float:
    x = _measure(points)
    return solve_exact(euclidean_cost(x.atoms, target.atoms), x, target).cost


def run_flow(initial: DiscreteMeasure, target: DiscreteMeasure, config: FlowConfig) -> FlowTrajectory:
    """Explicit Euler flow of ``initial``'s atoms toward ``target``.

    Both measures must have the same number of atoms and uniform weights.
    The exact OT cost to the target is recorded every ``config.stride``
    steps and after the last step. If any position leaves the ball of radius
    ``config.max_norm`` the flow stops and the partial trajectory is returned
    with ``aborted=True``.
    """
    n = initial.n
    if target.n != n:
        raise ValueError(f"flow needs equal atom counts, got {n} and {target.n}")
    for m in (initial, target):
        if not np.allclose(m.weights, 1.0 / m.n, rtol=0, atol=1e-15):
            raise ValueError("flow needs uniform weights")
    X = np.array(initial.atoms, dtype=float)
    traj = FlowTrajectory([X.copy()], [wasserstein(X, target)], [0],
                          metadata={"flow": _config_dict(config), "n": n})
    for k in range(1, config.steps + 1):
        grad, converged = _gradient(X, target, config, None)
        traj.unconverged_solves += not converged
        X = X - config.step_size * n * grad
        if not np.all(np.isfinite(X)) or np.abs(X).max() > config.max_norm:
            traj.aborted = True
            break
        traj.snapshots.append(X.copy())
        if k % config.stride == 0 or k == config.steps:
            traj.wasserstein.append(wasserstein(X, target))
            traj.evaluation_steps.append(k)
    return traj


def _config_dict(config: FlowConfig) -> dict:
    return asdict(config)


def gaussian_blobs(n: int, seed: int = 0, distance: float = 3.0, std: float = 0.5, dim: int = 2):
    """Source and target clouds: isotropic Gaussians whose centres are ``distance`` apart."""
    rng = np.random.default_rng(seed)
    offset = np.zeros(dim)
    offset[0] = distance
    source = DiscreteMeasure.uniform(rng.normal(scale=std, size=(n, dim)))
    target = DiscreteMeasure.uniform(rng.normal(scale=std, size=(n, dim)) + offset)
    return source, target


def write_trajectory(traj: FlowTrajectory, out_dir, prefix: str = "flow", snapshots: bool = True) -> list[Path]:
    """Write ``<prefix>_wasserstein.csv`` and one measure file per snapshot."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    path = out / f"{prefix}_wasserstein.csv"
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["step", "wasserstein"])
        for step, value in zip(traj.evaluation_steps, traj.wasserstein):
            w.writerow([step, f"{value:.17g}"])
    written.append(path)
    if snapshots:
        for k, pts in enumerate(traj.snapshots):
            p = out / f"{prefix}_snapshot_{k:04d}.txt"
            write_measure(DiscreteMeasure.uniform(pts), p)
            written.append(p)
    return written
