"""Exact reference optimum by exhaustive enumeration of activation patterns.

Independent correctness oracle for the branch-and-bound engine: every binary
pattern gets its continuous subproblem solved by the first-order solver in
:mod:`fairtwin.engine.pg` (a different algorithm family from the relaxation
engine), and the best pattern wins.
"""

from __future__ import annotations

import itertools

import numpy as np

from ..instance import Instance
from ..quadcost import QuadCost
from .bnb import SolveResult, SolveStatus
from .model import QuadObjective, allocation_from_u, build_subproblem, capacity_upper_bound, quadcost_objective_spec
from .pg import solve_nonneg_qp_alm

ENUMERATION_LIMIT = 12


class OracleBudgetError(ValueError):
    pass


def enumerate_oracle(inst: Instance, cost=None, tol: float = 1e-9) -> SolveResult:
    """Optimum over all activation patterns; ``cost`` may be a QuadCost, a
    QuadObjective, or None for the nominal linear objective."""
    if inst.n_temporary > ENUMERATION_LIMIT:
        raise OracleBudgetError(
            f"{inst.n_temporary} temporary facilities exceed the {ENUMERATION_LIMIT}-bit enumeration budget"
        )
    if cost is None:
        from .model import nominal_objective_spec

        obj = nominal_objective_spec(inst)
    elif isinstance(cost, QuadCost):
        obj = quadcost_objective_spec(cost)
    elif isinstance(cost, QuadObjective):
        obj = cost
    else:
        raise TypeError(f"unsupported cost of type {type(cost)!r}")

    demand_total = inst.demand_vector().sum()
    margin = 1e-12 * max(1.0, demand_total)
    best_u = None
    best_obj = np.inf
    patterns = 0
    solves = 0
    for bits in itertools.product((0, 1), repeat=inst.n_temporary):
        patterns += 1
        pattern = np.array(bits, dtype=float)
        if capacity_upper_bound(inst, pattern) < demand_total - margin:
            continue
        sub = build_subproblem(inst, obj, pattern, pattern)
        solves += 1
        x_sub, val = solve_nonneg_qp_alm(sub.P, sub.q, sub.A, sub.b, sub.G, sub.h, tol=tol)
        total = val + sub.constant
        if total < best_obj:
            best_obj = total
            u = sub.assemble(x_sub, inst.dim)
            u[inst.n_counties * inst.n_facilities :] = pattern
            best_u = u
    if best_u is None:
        return SolveResult(SolveStatus.INFEASIBLE, None, np.nan, patterns, solves, [])
    return SolveResult(
        SolveStatus.OPTIMAL, allocation_from_u(best_u, inst), float(best_obj), patterns, solves, []
    )
