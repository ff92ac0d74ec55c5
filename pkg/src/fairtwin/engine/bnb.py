"""Best-first branch and bound over the binary activation variables.

Every node relaxes the unfixed activations to [0, 1] and solves the convex
relaxation with the interior-point engine; branching picks the most
fractional activation (ties to the lowest facility index), node selection is
best-first by relaxation bound with insertion order as the tie-break, so a
fixed configuration always explores the same tree.
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from ..instance import Instance
from .model import QuadObjective, allocation_from_u, build_subproblem, capacity_upper_bound
from .qp import QPError, solve_qp


class EngineError(RuntimeError):
    """Numerical failure inside a relaxation solve."""


class SolveStatus(Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    NODE_LIMIT = "node_limit"


@dataclass
class SolveResult:
    status: SolveStatus
    allocation: object
    objective: float
    nodes_explored: int
    relaxation_solves: int
    node_log: list = field(default_factory=list)

    @property
    def optimal(self):
        return self.status is SolveStatus.OPTIMAL


def _lex_smaller(a: np.ndarray, b: np.ndarray) -> bool:
    diff = np.flatnonzero(a != b)
    return diff.size > 0 and a[diff[0]] < b[diff[0]]


def solve_branch_and_bound(
    inst: Instance,
    obj: QuadObjective,
    node_limit: int = 10**6,
    gap_tol: float = 1e-6,
    int_tol: float = 1e-6,
    qp_tol: float = 1e-9,
    keep_log: bool = False,
) -> SolveResult:
    nt = inst.n_temporary
    nx = inst.n_counties * inst.n_facilities
    demand_total = inst.demand_vector().sum()
    cap_margin = 1e-12 * max(1.0, demand_total)
    log = [] if keep_log else None

    state = {"nodes": 0, "solves": 0, "inc_u": None, "inc_obj": np.inf}

    def feasible_capacity(y_hi):
        return capacity_upper_bound(inst, np.asarray(y_hi, dtype=float)) >= demand_total - cap_margin

    def relax(y_lo, y_hi):
        sub = build_subproblem(inst, obj, y_lo, y_hi)
        state["solves"] += 1
        try:
            sol = solve_qp(sub.P, sub.q, sub.A, sub.b, sub.lo, sub.hi, sub.G, sub.h,
                           tol=qp_tol, obj_offset=sub.constant)
        except QPError:
            # Degenerate nodes can defeat the normal-equations path; the
            # augmented KKT solve is slower but much better conditioned.
            try:
                sol = solve_qp(sub.P, sub.q, sub.A, sub.b, sub.lo, sub.hi, sub.G, sub.h,
                               tol=qp_tol, obj_offset=sub.constant, method="augmented")
            except QPError as exc:
                raise EngineError(f"relaxation solve failed: {exc}") from exc
        return sub.assemble(sol.x, inst.dim), sol.objective + sub.constant

    def offer_incumbent(u):
        value = obj.value(u)
        tie = 1e-9 * (1.0 + abs(state["inc_obj"])) if np.isfinite(state["inc_obj"]) else 0.0
        if value < state["inc_obj"] - tie:
            state["inc_u"], state["inc_obj"] = u, value
        elif value <= state["inc_obj"] + tie and state["inc_u"] is not None and _lex_smaller(u, state["inc_u"]):
            state["inc_u"], state["inc_obj"] = u, value

    def polish(pattern):
        """Fix all activations at the binary pattern and re-solve for exact x."""
        yv = pattern.astype(float)
        u, _ = relax(yv, yv)
        u[:nx] = np.maximum(u[:nx], 0.0)
        u[nx:] = pattern
        return u

    def finish(status):
        if status is SolveStatus.OPTIMAL:
            alloc = allocation_from_u(state["inc_u"], inst)
            return SolveResult(status, alloc, state["inc_obj"], state["nodes"], state["solves"], log or [])
        objective = state["inc_obj"] if np.isfinite(state["inc_obj"]) else np.nan
        return SolveResult(status, None, objective, state["nodes"], state["solves"], log or [])

    if not feasible_capacity(np.ones(nt)):
        return finish(SolveStatus.INFEASIBLE)

    heap = []
    counter = [0]

    def push(bound, y_lo, y_hi, parent):
        heapq.heappush(heap, (bound, counter[0], parent, y_lo.copy(), y_hi.copy()))
        counter[0] += 1

    def process(node_id, parent, parent_bound, y_lo, y_hi):
        """Solve one node; returns False if the node was pruned as infeasible."""
        state["nodes"] += 1
        u, bound = relax(y_lo, y_hi)
        if log is not None:
            inc = state["inc_obj"]
            log.append({
                "node": node_id, "parent": parent, "bound": bound, "parent_bound": parent_bound,
                "incumbent": inc if np.isfinite(inc) else None,
            })
        prune_margin = 0.1 * gap_tol * (1.0 + abs(state["inc_obj"])) if np.isfinite(state["inc_obj"]) else 0.0
        if np.isfinite(state["inc_obj"]) and bound >= state["inc_obj"] - prune_margin:
            return
        yr = u[nx:]
        frac = np.abs(yr - np.rint(yr))
        free = y_lo != y_hi
        frac[~free] = 0.0
        pattern = np.rint(yr).astype(int)
        pattern[~free] = y_lo[~free].astype(int)
        if np.all(frac <= int_tol) and feasible_capacity(pattern):
            offer_incumbent(polish(pattern) if nt else np.concatenate([np.maximum(u[:nx], 0.0), u[nx:]]))
            return
        if np.all(frac <= int_tol):
            # Near-integral point whose rounded pattern under-covers demand:
            # force the first rounded-closed free activation open instead.
            candidates = np.flatnonzero(free & (pattern == 0))
            j = int(candidates[0])
        else:
            j = int(np.flatnonzero(frac == frac.max())[0])
        for val in (0.0, 1.0):
            lo2, hi2 = y_lo.copy(), y_hi.copy()
            lo2[j] = hi2[j] = val
            push(bound, lo2, hi2, node_id)

    root_id = counter[0]
    counter[0] += 1
    process(root_id, -1, -np.inf, np.zeros(nt), np.ones(nt))

    while heap:
        if state["nodes"] >= node_limit:
            return finish(SolveStatus.NODE_LIMIT)
        bound_est, node_id, parent, y_lo, y_hi = heapq.heappop(heap)
        prune_margin = 0.1 * gap_tol * (1.0 + abs(state["inc_obj"])) if np.isfinite(state["inc_obj"]) else 0.0
        if np.isfinite(state["inc_obj"]) and bound_est >= state["inc_obj"] - prune_margin:
            continue
        if not feasible_capacity(y_hi):
            continue
        process(node_id, parent, bound_est, y_lo, y_hi)

    if state["inc_u"] is None:
        return finish(SolveStatus.INFEASIBLE)
    return finish(SolveStatus.OPTIMAL)
