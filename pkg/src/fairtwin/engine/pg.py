"""First-order convex solver used only by the enumeration oracle.

Augmented-Lagrangian outer loop with an accelerated projected-gradient inner
loop (projection onto the nonnegative orthant), followed by an active-set
least-squares polish. Deliberately a different algorithm family from the
interior-point relaxation engine so the two can cross-check each other.
"""

from __future__ import annotations

import numpy as np


class PGError(RuntimeError):
    pass


def _spectral_norm_sq(M):
    if M.shape[0] == 0:
        return 0.0
    return float(np.linalg.eigvalsh(M @ M.T)[-1])


def solve_nonneg_qp_alm(P, q, A, b, G, h, tol=1e-9, max_outer=80, max_inner=4000):
    """min 0.5 x'Px + q'x  s.t.  Ax = b, Gx <= h, x >= 0  (P PSD or None).

    Returns (x, objective). Accuracy target is a small multiple of ``tol``
    scaled by the data magnitude; the polish step usually lands on the exact
    optimal face.
    """
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float)
    G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float)
    me, mg = A.shape[0], G.shape[0]

    bscale = 1.0 + max(
        float(np.max(np.abs(b))) if me else 0.0,
        float(np.max(np.abs(h))) if mg else 0.0,
    )
    qscale = 1.0 + float(np.max(np.abs(q))) if n else 1.0

    lip_p = float(np.linalg.eigvalsh(P)[-1]) if P is not None else 0.0
    norm_a = _spectral_norm_sq(A)
    norm_g = _spectral_norm_sq(G)

    x = np.zeros(n)
    lam = np.zeros(me)
    mu = np.zeros(mg)
    rho = max(1.0, qscale / bscale)

    def objective(v):
        val = float(q @ v)
        if P is not None:
            val += 0.5 * float(v @ (P @ v))
        return val

    def feasibility(v):
        fe = float(np.max(np.abs(A @ v - b))) if me else 0.0
        fg = float(np.max(np.maximum(G @ v - h, 0.0))) if mg else 0.0
        return max(fe, fg)

    feas_prev = np.inf
    for outer in range(max_outer):
        lip = lip_p + rho * (norm_a + norm_g) + 1e-12
        step = 1.0 / lip

        def grad(v):
            g = q.copy()
            if P is not None:
                g += P @ v
            if me:
                g += A.T @ (lam + rho * (A @ v - b))
            if mg:
                g += G.T @ np.maximum(0.0, mu + rho * (G @ v - h))
            return g

        # FISTA with adaptive restart on the smooth augmented Lagrangian over x >= 0.
        zk = x.copy()
        xk = x.copy()
        t = 1.0
        move_tol = max(tol * bscale * 0.01, 1e-13 * bscale)
        for inner in range(max_inner):
            gz = grad(zk)
            x_new = np.maximum(zk - step * gz, 0.0)
            if float((zk - x_new) @ (x_new - xk)) > 0:
                t = 1.0  # momentum points uphill: restart
            t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
            zk = x_new + ((t - 1.0) / t_new) * (x_new - xk)
            move = float(np.max(np.abs(x_new - xk)))
            xk = x_new
            t = t_new
            if move <= move_tol:
                break
        x = xk

        feas = feasibility(x)
        if me:
            lam = lam + rho * (A @ x - b)
        if mg:
            mu = np.maximum(0.0, mu + rho * (G @ x - h))
        if feas <= tol * bscale:
            break
        if feas > 0.25 * feas_prev:
            rho *= 5.0
        feas_prev = feas

    x = _polish(P, q, A, b, G, h, x, objective)
    return x, objective(x)


def _polish(P, q, A, b, G, h, x, objective):
    """Active-set least-squares refinement of the first-order solution."""
    n = x.shape[0]
    me, mg = A.shape[0], G.shape[0]
    scale = 1.0 + float(np.max(np.abs(b))) if me else 1.0
    act_tol = 1e-7 * scale

    free = x > act_tol
    if mg:
        slack = h - G @ x
        act_rows = slack <= act_tol
    else:
        act_rows = np.zeros(0, dtype=bool)
    nf = int(np.count_nonzero(free))
    if nf == 0:
        return x
    E = np.vstack([A[:, free] if me else np.zeros((0, nf)), G[np.ix_(act_rows, free)] if mg else np.zeros((0, nf))])
    rhs = np.concatenate([b if me else np.zeros(0), h[act_rows] if mg else np.zeros(0)])
    m_act = E.shape[0]
    Pff = P[np.ix_(free, free)] if P is not None else np.zeros((nf, nf))
    kkt = np.block([[Pff, E.T], [E, np.zeros((m_act, m_act))]])
    target = np.concatenate([-q[free], rhs])
    try:
        sol = np.linalg.lstsq(kkt, target, rcond=None)[0]
    except np.linalg.LinAlgError:
        return x
    x_new = np.zeros(n)
    x_new[free] = sol[:nf]
    # Accept only if the refined point is feasible and no worse.
    if np.any(x_new < -act_tol):
        return x
    x_new = np.maximum(x_new, 0.0)
    fe = float(np.max(np.abs(A @ x_new - b))) if me else 0.0
    fg = float(np.max(G @ x_new - h)) if mg else 0.0
    feas_old = max(
        float(np.max(np.abs(A @ x - b))) if me else 0.0,
        float(np.max(G @ x - h)) if mg else 0.0,
    )
    if max(fe, fg) <= max(1e-9 * scale, feas_old) and objective(x_new) <= objective(x) + 1e-9 * (1 + abs(objective(x))):
        return x_new
    return x
