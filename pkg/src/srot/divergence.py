"""Regularized OT functionals and their debiased divergences."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .core import DiscreteMeasure, TransportPlan, cost_matrix, independent_coupling, kl_divergence, plan_cost
from .sinkhorn import SolverConfig, solve_self, solve_with_reference, tightened
from .sliced import SlicedConfig, sot_plan

DIVERGENCE_TOL = 1e-10


@dataclass
class DivergenceResult:
    value: float
    cross: float
    self_source: float
    self_target: float
    converged: bool


def regularized_value(cost, plan: TransportPlan, reference: TransportPlan, epsilon: float) -> float:
    """``<C, P> + eps * KL(P | R)``."""
    return plan_cost(cost, plan) + epsilon * kl_divergence(plan, reference)


def _functional(source, target, cost, reference, solver):
    if source is target:
        plan, duals = solve_self(source, cost, reference, solver)
    else:
        plan, duals = solve_with_reference(source, target, cost, reference, solver)
    return regularized_value(cost, plan, reference, solver.epsilon), duals.converged


def srot_functional(source: DiscreteMeasure, target: DiscreteMeasure, cost, sliced: SlicedConfig,
                    solver: SolverConfig) -> float:
    """Optimal value of the sliced-regularized problem for this pair."""
    reference = sot_plan(source, target, cost, sliced)
    return _functional(source, target, cost, reference, solver)[0]


def eot_functional(source: DiscreteMeasure, target: DiscreteMeasure, cost, solver: SolverConfig) -> float:
    return _functional(source, target, cost, independent_coupling(source, target), solver)[0]


def _key(measure: DiscreteMeasure):
    return measure.n, measure.atoms.tobytes(), measure.weights.tobytes()


def _canonical(source: DiscreteMeasure, target: DiscreteMeasure) -> bool:
    """True if ``(target, source)`` is the canonical orientation of the pair.

    The regularized value is invariant under swapping the pair (the cost and
    the sliced plan both transpose), but alternating Sinkhorn updates are not:
    an unconverged run depends on which block moves first. Solving the cross
    term in one fixed orientation makes the divergence symmetric bit for bit.
    """
    return _key(target) < _key(source)


def _pairs(source, target):
    if _key(source) == _key(target):
        # Identical measures: solve the cross term as a self pair too, so the divergence is exactly 0.
        source = target
    cross = (target, source) if _canonical(source, target) else (source, target)
    return cross, (source, source), (target, target)


def _combine(cross, self_s, self_t, converged) -> DivergenceResult:
    return DivergenceResult(cross - 0.5 * (self_s + self_t), cross, self_s, self_t, converged)


def srot_divergence(source: DiscreteMeasure, target: DiscreteMeasure, sliced: SlicedConfig,
                    solver: SolverConfig, cost_fn: Callable = cost_matrix) -> DivergenceResult:
    """``OT(mu, nu) - OT(mu, mu) / 2 - OT(nu, nu) / 2``.

    Each term uses the sliced plan built for its own pair (self pairs need a
    coupling of the measure with itself); all three share ``sliced.seed``.
    The solver tolerance is tightened to ``DIVERGENCE_TOL``, and the cross
    term is solved in a canonical orientation of the pair.
    """
    solver = tightened(solver, DIVERGENCE_TOL)
    terms = []
    for x, y in _pairs(source, target):
        C = cost_fn(x, y)
        terms.append(_functional(x, y, C, sot_plan(x, y, C, sliced), solver))
    return _combine(terms[0][0], terms[1][0], terms[2][0], all(t[1] for t in terms))


def sinkhorn_divergence(source: DiscreteMeasure, target: DiscreteMeasure, solver: SolverConfig,
                        cost_fn: Callable = cost_matrix) -> DivergenceResult:
    """Debiased entropic OT with independent-coupling references."""
    solver = tightened(solver, DIVERGENCE_TOL)
    terms = []
    for x, y in _pairs(source, target):
        terms.append(_functional(x, y, cost_fn(x, y), independent_coupling(x, y), solver))
    return _combine(terms[0][0], terms[1][0], terms[2][0], all(t[1] for t in terms))


def divergence(kind: str, source, target, solver: SolverConfig, sliced: SlicedConfig | None = None,
               cost_fn: Callable = cost_matrix) -> DivergenceResult:
    if kind == "srot":
        return srot_divergence(source, target, sliced or SlicedConfig(), solver, cost_fn)
    if kind == "sinkhorn":
        return sinkhorn_divergence(source, target, solver, cost_fn)
    raise ValueError(f"unknown divergence kind {kind!r}")


def shifted(measure: DiscreteMeasure, offset) -> DiscreteMeasure:
    return measure.with_atoms(measure.atoms + np.asarray(offset, dtype=float))
