"""Translation of allocation problems into solver-ready quadratic programs.

The engine always minimizes ``0.5 u'Hu + q'u + const`` over the allocation
feasible set; the nominal linear problem and the bias-perturbed problem are
both expressed this way. Activation variables can be fixed per node, in
which case they (and the assignment columns of closed facilities) are
eliminated before the continuous solve, keeping every subproblem's feasible
set full-dimensional.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..instance import Allocation, Instance
from ..quadcost import QuadCost


@dataclass
class QuadObjective:
    """Objective data over the full decision vector; ``hessian`` may be None (linear)."""

    hessian: np.ndarray | None
    linear: np.ndarray
    constant: float = 0.0

    def value(self, u: np.ndarray) -> float:
        v = float(self.linear @ u) + self.constant
        if self.hessian is not None:
            v += float(0.5 * u @ (self.hessian @ u))
        return v


def nominal_objective_spec(inst: Instance) -> QuadObjective:
    q = np.concatenate([inst.distance_cost.ravel(order="C"), inst.fixed_cost_vector()])
    return QuadObjective(hessian=None, linear=q, constant=0.0)


def biased_objective_spec(inst: Instance, x_bias, y_bias, lam: float) -> QuadObjective:
    """Nominal cost plus ``lam * (||x - x_bias||^2 + ||y - y_bias||^2)``, expanded."""
    x_bias = np.asarray(x_bias, dtype=float)
    y_bias = np.asarray(y_bias, dtype=float)
    if x_bias.shape != (inst.n_counties, inst.n_facilities):
        raise ValueError(f"x_bias shape {x_bias.shape} does not match instance")
    if y_bias.shape != (inst.n_temporary,):
        raise ValueError(f"y_bias shape {y_bias.shape} does not match instance")
    if lam < 0:
        raise ValueError("bias weight must be nonnegative")
    d = inst.dim
    u_bias = np.concatenate([x_bias.ravel(order="C"), y_bias])
    base = nominal_objective_spec(inst)
    return QuadObjective(
        hessian=2.0 * lam * np.eye(d),
        linear=base.linear - 2.0 * lam * u_bias,
        constant=lam * float(u_bias @ u_bias),
    )


def quadcost_objective_spec(cost: QuadCost) -> QuadObjective:
    return QuadObjective(hessian=cost.hessian, linear=cost.linear, constant=0.0)


@dataclass
class Subproblem:
    """Continuous QP over the kept variables of one branch-and-bound node."""

    P: np.ndarray | None
    q: np.ndarray
    constant: float
    A: np.ndarray
    b: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    G: np.ndarray
    h: np.ndarray
    kept: np.ndarray       # full-vector indices of the subproblem variables
    fixed_idx: np.ndarray  # full-vector indices eliminated at fixed values
    fixed_val: np.ndarray

    def assemble(self, x_sub: np.ndarray, dim: int) -> np.ndarray:
        u = np.zeros(dim)
        u[self.kept] = x_sub
        u[self.fixed_idx] = self.fixed_val
        return u


def capacity_upper_bound(inst: Instance, y_hi: np.ndarray) -> float:
    caps = inst.capacity_vector()
    total = caps[inst.existing_columns].sum()
    tcols = inst.temporary_columns
    if tcols.size:
        total += float(caps[tcols] @ y_hi)
    return float(total)


def build_subproblem(inst: Instance, obj: QuadObjective, y_lo, y_hi) -> Subproblem:
    """Eliminate fixed activations (and closed facilities' columns) from the node QP."""
    nc, nf, nt = inst.n_counties, inst.n_facilities, inst.n_temporary
    nx = nc * nf
    y_lo = np.asarray(y_lo, dtype=float)
    y_hi = np.asarray(y_hi, dtype=float)
    caps = inst.capacity_vector()
    tcols = inst.temporary_columns

    closed = np.zeros(nf, dtype=bool)
    fixed_y = np.zeros(nt, dtype=bool)
    for t in range(nt):
        if y_lo[t] == y_hi[t]:
            fixed_y[t] = True
            if y_hi[t] == 0.0:
                closed[tcols[t]] = True

    keep_col = ~closed
    x_keep = np.flatnonzero(np.repeat(keep_col[None, :], nc, axis=0).ravel())
    free_t = np.flatnonzero(~fixed_y)
    kept = np.concatenate([x_keep, nx + free_t]).astype(int)
    fixed_idx = (nx + np.flatnonzero(fixed_y)).astype(int)
    fixed_val = y_lo[fixed_y].copy()

    n_sub = kept.size
    nxk = x_keep.size
    q_full = obj.linear
    const = obj.constant + float(q_full[fixed_idx] @ fixed_val)
    q_sub = q_full[kept].copy()
    P_sub = None
    if obj.hessian is not None:
        H = obj.hessian
        P_sub = H[np.ix_(kept, kept)]
        if fixed_idx.size:
            q_sub = q_sub + H[np.ix_(kept, fixed_idx)] @ fixed_val
            const += 0.5 * float(fixed_val @ H[np.ix_(fixed_idx, fixed_idx)] @ fixed_val)

    # Column index within the kept-x block for each (county, open facility).
    open_cols = np.flatnonzero(keep_col)
    n_open = open_cols.size
    sub_of_cf = -np.ones((nc, nf), dtype=int)
    for ci in range(nc):
        sub_of_cf[ci, open_cols] = ci * n_open + np.arange(n_open)

    A = np.zeros((nc, n_sub))
    for ci in range(nc):
        A[ci, ci * n_open : (ci + 1) * n_open] = 1.0
    b = inst.demand_vector()

    rows = []
    rhs = []
    for j, col in enumerate(open_cols):
        row = np.zeros(n_sub)
        row[sub_of_cf[:, col]] = 1.0
        t_pos = np.flatnonzero(tcols == col)
        if t_pos.size and not fixed_y[t_pos[0]]:
            # free temporary: load - cap * y <= 0
            y_sub = nxk + int(np.flatnonzero(free_t == t_pos[0])[0])
            row[y_sub] = -caps[col]
            rhs.append(0.0)
        else:
            rhs.append(caps[col])
        rows.append(row)
    G = np.array(rows) if rows else np.zeros((0, n_sub))
    h = np.array(rhs)

    lo = np.zeros(n_sub)
    hi = np.full(n_sub, np.inf)
    lo[nxk:] = y_lo[free_t]
    hi[nxk:] = y_hi[free_t]
    return Subproblem(
        P=P_sub, q=q_sub, constant=const, A=A, b=b, lo=lo, hi=hi, G=G, h=h,
        kept=kept, fixed_idx=fixed_idx, fixed_val=fixed_val,
    )


def allocation_from_u(u: np.ndarray, inst: Instance) -> Allocation:
    nx = inst.n_counties * inst.n_facilities
    x = np.maximum(u[:nx].reshape(inst.n_counties, inst.n_facilities), 0.0)
    y = np.rint(u[nx:]).astype(int)
    return Allocation(x=x, y=y)
