"""Sinkhorn iterations for KL-regularized OT with an arbitrary reference plan.

The regularized problem ``min <C, P> + eps * KL(P | R)`` over couplings is
solved by alternating exact maximisation of its dual in ``f`` and ``g``.
With ``R = a b^T`` this is ordinary entropic OT; with ``R`` a (smoothed)
sliced plan it is the sliced-regularized problem.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field, replace

import numpy as np

from .core import DiscreteMeasure, TransportPlan, independent_coupling, marginal_violation
from .sliced import SlicedConfig, sot_plan

DOMAINS = ("auto", "scaling", "log")


class SinkhornError(RuntimeError):
    pass


class InfeasibleKernelError(SinkhornError):
    """A kernel row or column is identically zero."""


class ScalingOverflowError(SinkhornError):
    """Scaling vectors left the floating-point range; use the log domain."""


@dataclass(frozen=True)
class SolverConfig:
    epsilon: float = 0.01
    max_iter: int = 5000
    tol: float = 1e-9
    domain: str = "auto"
    trace: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.max_iter < 1:
            raise ValueError("max_iter must be >= 1")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if self.domain not in DOMAINS:
            raise ValueError(f"domain must be one of {DOMAINS}")


@dataclass
class DualSolution:
    f: np.ndarray
    g: np.ndarray
    u: np.ndarray
    v: np.ndarray
    iterations: int
    violation: float
    converged: bool
    domain: str
    epsilon: float
    # (iteration, marginal violation, dual objective) per iteration when traced.
    trace: list = field(default_factory=list)


def select_domain(cost, epsilon: float, domain: str = "auto") -> str:
    """Scaling domain when ``eps >= 0.05 * (max C - min C)``, else log domain."""
    if domain != "auto":
        return domain
    cost = np.asarray(cost)
    spread = float(cost.max() - cost.min()) if cost.size else 0.0
    return "scaling" if epsilon >= 0.05 * spread else "log"


def kernel(cost, reference, epsilon: float) -> np.ndarray:
    """``K = R * exp(-C / eps)``, checked for empty rows and columns."""
    cost = np.asarray(cost, dtype=float)
    ref = reference.entries if isinstance(reference, TransportPlan) else np.asarray(reference, dtype=float)
    if cost.shape != ref.shape:
        raise ValueError(f"cost shape {cost.shape} vs reference {ref.shape}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    K = ref * np.exp(-cost / epsilon)
    if np.any(K.sum(axis=1) == 0) or np.any(K.sum(axis=0) == 0):
        raise InfeasibleKernelError("kernel has an all-zero row or column; try the log domain")
    return K


def log_kernel(cost, reference, epsilon: float) -> np.ndarray:
    """``log R - C / eps`` with ``-inf`` off the reference support."""
    cost = np.asarray(cost, dtype=float)
    ref = reference.entries if isinstance(reference, TransportPlan) else np.asarray(reference, dtype=float)
    if cost.shape != ref.shape:
        raise ValueError(f"cost shape {cost.shape} vs reference {ref.shape}")
    support = ref > 0
    if not support.any(axis=1).all() or not support.any(axis=0).all():
        raise InfeasibleKernelError("reference plan has an empty row or column")
    with np.errstate(divide="ignore"):
        return np.log(ref) - cost / epsilon


def _lse_rows(logK: np.ndarray, shift: np.ndarray) -> np.ndarray:
    """Row-wise ``logsumexp(logK + shift[None, :])``, max-stabilized."""
    M = logK + shift[None, :]
    mx = M.max(axis=1)
    M -= mx[:, None]
    # Terms below exp(-700) cannot change a sum whose largest term is 1, and
    # clamping keeps exp out of the (slow) subnormal range.
    np.maximum(M, -700.0, out=M)
    np.exp(M, out=M)
    return mx + np.log(M.sum(axis=1))


def _weights(w) -> np.ndarray:
    return np.asarray(w.weights if isinstance(w, DiscreteMeasure) else w, dtype=float)


def sinkhorn_scaling(K, source, target, config: SolverConfig, callback=None) -> DualSolution:
    """Multiplicative updates ``u = a / (K v)``, ``v = b / (K^T u)`` from ``u = v = 1``.

    Stops once the row marginal of ``diag(u) K diag(v)`` is within
    ``config.tol`` (columns are exact after each ``v`` update) or after
    ``config.max_iter`` sweeps. ``callback(it, u, v)`` is invoked after every
    sweep if given.
    """
    K = np.asarray(K, dtype=float)
    a, b = _weights(source), _weights(target)
    eps = config.epsilon
    u = np.ones(a.size)
    v = np.ones(b.size)
    Kv = K @ v
    trace = []
    violation = np.inf
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        u = a / Kv
        KTu = K.T @ u
        v = b / KTu
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v)) and u.min() > 0 and v.min() > 0):
            raise ScalingOverflowError(
                f"scaling vectors over/underflowed at iteration {it} (eps={eps}); use the log domain"
            )
        Kv = K @ v
        violation = float(np.abs(u * Kv - a).max())
        if callback is not None:
            callback(it, u, v)
        if config.trace:
            with np.errstate(divide="ignore"):
                f, g = eps * np.log(u), eps * np.log(v)
            dual = float(f @ a + g @ b - eps * (u @ Kv))
            trace.append((it, violation, dual))
        if violation <= config.tol:
            converged = True
            break
    with np.errstate(divide="ignore"):
        f, g = eps * np.log(u), eps * np.log(v)
    return DualSolution(f, g, u, v, it, violation, converged, "scaling", eps, trace)


def sinkhorn_log(cost, reference, source, target, config: SolverConfig, callback=None) -> DualSolution:
    """Log-domain block coordinate ascent on the dual.

    ``f_i = eps * (log a_i - logsumexp_j(log R_ij + (g_j - C_ij) / eps))`` and
    the symmetric update for ``g``, starting from ``f = g = 0``. Entries with
    ``R_ij = 0`` drop out of the sums. ``callback(it, block, f, g)`` is called
    after each block update (``block`` is ``"f"`` or ``"g"``).
    """
    a, b = _weights(source), _weights(target)
    eps = config.epsilon
    logK = log_kernel(cost, reference, eps)
    logKT = np.ascontiguousarray(logK.T)
    log_a, log_b = np.log(a), np.log(b)
    f = np.zeros(a.size)
    g = np.zeros(b.size)
    lse_row = _lse_rows(logK, g)  # log (K exp(g / eps))
    trace = []
    violation = np.inf
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        f = eps * (log_a - lse_row)
        if callback is not None:
            callback(it, "f", f, g)
        lse_col = _lse_rows(logKT, f / eps)
        g = eps * (log_b - lse_col)
        if callback is not None:
            callback(it, "g", f, g)
        lse_row = _lse_rows(logK, g / eps)
        row_mass = np.exp(f / eps + lse_row)
        violation = float(np.abs(row_mass - a).max())
        if config.trace:
            dual = float(f @ a + g @ b - eps * row_mass.sum())
            trace.append((it, violation, dual))
        if violation <= config.tol:
            converged = True
            break
    with np.errstate(over="ignore"):
        u, v = np.exp(f / eps), np.exp(g / eps)
    return DualSolution(f, g, u, v, it, violation, converged, "log", eps, trace)


def dual_objective(cost, reference, source, target, f, g, epsilon: float) -> float:
    """``<f, a> + <g, b> - eps * sum R exp((f + g - C) / eps)``."""
    a, b = _weights(source), _weights(target)
    logK = log_kernel(cost, reference, epsilon)
    with np.errstate(under="ignore"):
        mass = np.exp(logK + (f[:, None] + g[None, :]) / epsilon).sum()
    return float(f @ a + g @ b - epsilon * mass)


def recover_plan(cost, reference, duals: DualSolution, source, target) -> TransportPlan:
    """``P = diag(u) K diag(v)``, evaluated in the domain the duals came from."""
    a, b = _weights(source), _weights(target)
    eps = duals.epsilon
    if duals.domain == "scaling":
        P = duals.u[:, None] * kernel(cost, reference, eps) * duals.v[None, :]
    else:
        logK = log_kernel(cost, reference, eps)
        P = np.exp(logK + (duals.f[:, None] + duals.g[None, :]) / eps)
    return TransportPlan(P, a, b)


def solve_with_reference(source, target, cost, reference: TransportPlan, config: SolverConfig,
                         callback=None):
    """Regularized OT toward ``reference``; returns ``(plan, duals)``."""
    domain = select_domain(cost, config.epsilon, config.domain)
    if domain == "scaling":
        try:
            K = kernel(cost, reference, config.epsilon)
            duals = sinkhorn_scaling(K, source, target, config, callback)
        except SinkhornError:
            if config.domain != "auto":
                raise
            domain = "log"
    if domain == "scaling":
        P = duals.u[:, None] * K * duals.v[None, :]
        plan = TransportPlan(P, _weights(source), _weights(target))
    else:
        duals = sinkhorn_log(cost, reference, source, target, config, callback)
        plan = recover_plan(cost, reference, duals, source, target)
    duals.violation = marginal_violation(plan)
    return plan, duals


def sinkhorn_symmetric(cost, reference, measure, config: SolverConfig) -> DualSolution:
    """Averaged fixed-point iteration for a self pair (symmetric cost and reference).

    ``f <- (f + T(f)) / 2`` with ``T(f)_i = eps * (log a_i - logsumexp_j(log R_ij + (f_j - C_ij) / eps))``.
    Alternating updates on a symmetric problem tend to oscillate between two
    iterates and stall; averaging removes the oscillation. Both potentials of
    the returned solution are ``f``.
    """
    a = _weights(measure)
    eps = config.epsilon
    logK = log_kernel(cost, reference, eps)
    log_a = np.log(a)
    f = np.zeros(a.size)
    trace = []
    violation = np.inf
    converged = False
    it = 0
    for it in range(1, config.max_iter + 1):
        f = 0.5 * (f + eps * (log_a - _lse_rows(logK, f / eps)))
        row_mass = np.exp(f / eps + _lse_rows(logK, f / eps))
        violation = float(np.abs(row_mass - a).max())
        if config.trace:
            trace.append((it, violation, float(2 * f @ a - eps * row_mass.sum())))
        if violation <= config.tol:
            converged = True
            break
    with np.errstate(over="ignore"):
        u = np.exp(f / eps)
    return DualSolution(f, f.copy(), u, u.copy(), it, violation, converged, "log", eps, trace)


def solve_self(measure, cost, reference: TransportPlan, config: SolverConfig):
    """Regularized OT of a measure with itself; returns ``(plan, duals)``.

    Falls back to :func:`solve_with_reference` if the cost or the reference is
    not symmetric.
    """
    C = np.asarray(cost, dtype=float)
    R = reference.entries
    if not (np.array_equal(C, C.T) and np.array_equal(R, R.T)):
        return solve_with_reference(measure, measure, cost, reference, config)
    duals = sinkhorn_symmetric(C, reference, measure, config)
    a = _weights(measure)
    plan = recover_plan(C, reference, duals, a, a)
    duals.violation = marginal_violation(plan)
    return plan, duals


def solve_eot(source: DiscreteMeasure, target: DiscreteMeasure, cost, config: SolverConfig,
              callback=None):
    """Entropic OT: the reference is the independent coupling."""
    return solve_with_reference(source, target, cost, independent_coupling(source, target), config, callback)


def solve_srot(source: DiscreteMeasure, target: DiscreteMeasure, cost, sliced: SlicedConfig,
               config: SolverConfig, callback=None, timings: dict | None = None):
    """Sliced-regularized OT: the reference is the smoothed sliced plan.

    If ``timings`` is a dict it receives ``"sot_s"`` and ``"sinkhorn_s"``
    wall-clock durations.
    """
    t0 = time.perf_counter()
    reference = sot_plan(source, target, cost, sliced)
    t1 = time.perf_counter()
    plan, duals = solve_with_reference(source, target, cost, reference, config, callback)
    t2 = time.perf_counter()
    if timings is not None:
        timings["sot_s"] = t1 - t0
        timings["sinkhorn_s"] = t2 - t1
    plan.meta["reference"] = reference
    return plan, duals


def write_trace(duals: DualSolution, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "marginalViolation", "dualObjective"])
        for it, viol, dual in duals.trace:
            writer.writerow([it, f"{viol:.17g}", f"{dual:.17g}"])


def tightened(config: SolverConfig, tol: float) -> SolverConfig:
    return replace(config, tol=min(config.tol, tol))
