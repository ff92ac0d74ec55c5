"""Optimization engine: nominal MILP, bias-perturbed MIQP, and learned-cost MIQP.

All three problems share the allocation feasible set and differ only in the
objective; they are solved by convex relaxations plus branch and bound on the
binary activations. :func:`enumerate_oracle` provides an independent exact
reference for small activation counts.
"""

from __future__ import annotations

import numpy as np

from ..instance import Instance
from ..quadcost import QuadCost, QuadCostError
from .bnb import EngineError, SolveResult, SolveStatus, solve_branch_and_bound
from .model import (
    QuadObjective,
    biased_objective_spec,
    nominal_objective_spec,
    quadcost_objective_spec,
)
from .oracle import ENUMERATION_LIMIT, OracleBudgetError, enumerate_oracle

__all__ = [
    "EngineError",
    "ENUMERATION_LIMIT",
    "OracleBudgetError",
    "QuadObjective",
    "SolveResult",
    "SolveStatus",
    "biased_objective_spec",
    "enumerate_oracle",
    "nominal_objective_spec",
    "quadcost_objective_spec",
    "solve_biased",
    "solve_milp",
    "solve_miqp",
]


def solve_milp(inst: Instance, node_limit: int = 10**6, gap_tol: float = 1e-6, keep_log: bool = False) -> SolveResult:
    """Globally optimal nominal allocation (transport plus opening costs)."""
    return solve_branch_and_bound(
        inst, nominal_objective_spec(inst), node_limit=node_limit, gap_tol=gap_tol, keep_log=keep_log
    )


def solve_biased(
    inst: Instance,
    x_bias,
    y_bias,
    lam: float,
    node_limit: int = 10**6,
    gap_tol: float = 1e-6,
    keep_log: bool = False,
) -> SolveResult:
    """Nominal objective plus a quadratic pull toward a reference configuration."""
    obj = biased_objective_spec(inst, x_bias, y_bias, lam)
    return solve_branch_and_bound(inst, obj, node_limit=node_limit, gap_tol=gap_tol, keep_log=keep_log)


def solve_miqp(
    inst: Instance,
    cost: QuadCost,
    node_limit: int = 10**6,
    gap_tol: float = 1e-6,
    keep_log: bool = False,
) -> SolveResult:
    """Minimize a learned convex quadratic over the unchanged feasible set."""
    if cost.dim != inst.dim:
        raise QuadCostError(f"cost dimension {cost.dim} does not match instance dimension {inst.dim}")
    cost.assert_psd()
    return solve_branch_and_bound(
        inst, quadcost_objective_spec(cost), node_limit=node_limit, gap_tol=gap_tol, keep_log=keep_log
    )
