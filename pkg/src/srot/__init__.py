"""Sliced-regularized optimal transport.

Entropic OT whose KL term is taken relative to a sliced-OT plan instead of the
independent coupling, plus the exact, sliced and entropic solvers it builds
on, debiased divergences, gradient flows, palette color transfer and
benchmark sweeps.
"""

from .core import (AbsoluteContinuityError, DimensionMismatchError, DiscreteMeasure, TransportPlan, cost_matrix,
                   independent_coupling, kl_divergence, l1_error, marginal_violation, plan_cost)
from .divergence import DivergenceResult, divergence, sinkhorn_divergence, srot_divergence
from .exact import ExactSolution, ExactSolverError, solve_exact
from .sinkhorn import DualSolution, SolverConfig, solve_eot, solve_self, solve_srot, solve_with_reference
from .sliced import SlicedConfig, sot_plan

__version__ = "0.1.0"

__all__ = [
    "AbsoluteContinuityError", "DimensionMismatchError", "DiscreteMeasure", "DivergenceResult", "DualSolution",
    "ExactSolution", "ExactSolverError", "SlicedConfig", "SolverConfig", "TransportPlan", "cost_matrix",
    "divergence", "independent_coupling", "kl_divergence", "l1_error", "marginal_violation", "plan_cost",
    "sinkhorn_divergence", "solve_eot", "solve_exact", "solve_self", "solve_srot", "solve_with_reference", "sot_plan",
    "srot_divergence",
]
