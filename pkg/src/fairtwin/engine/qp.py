"""Dense convex QP solver: primal-dual interior point with predictor-corrector steps.

Solves

    min 0.5 x'Px + q'x   s.t.   A x = b,   lo <= x <= hi,   G x <= h

with P symmetric PSD (``P=None`` means a pure LP). Box bounds are handled
natively so the normal-equations matrix stays cheap to assemble; general
inequality rows (capacity couplings) are expected to be few. This is the
single relaxation engine behind the branch-and-bound driver.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, lu_factor, lu_solve


class QPError(RuntimeError):
    """The interior-point iteration failed to reach the requested accuracy."""


@dataclass
class QPSolution:
    x: np.ndarray
    objective: float
    iterations: int
    eq_duals: np.ndarray
    max_residual: float


def _max_step(v, dv):
    """Largest alpha in (0, 1] keeping v + alpha*dv >= 0."""
    neg = dv < 0
    if not np.any(neg):
        return 1.0
    return min(1.0, float(np.min(-v[neg] / dv[neg])))


def solve_qp(P, q, A, b, lo, hi, G=None, h=None, tol=1e-9, gap_tol=1e-7, max_iter=200,
             obj_offset=0.0, method="normal"):
    """Solve the box/inequality-constrained convex QP above.

    Infinite bound entries are allowed: ``tol`` bounds the scaled residuals,
    ``gap_tol`` the duality gap relative to the objective magnitude
    (``obj_offset`` shifts the objective for that scaling only, for callers
    minimizing a function with a large constant part). ``method`` picks the
    Newton-system solve: condensed normal equations (fast) or the augmented
    KKT system (slower, markedly better conditioned on degenerate problems).
    Raises :class:`QPError` if the iteration hits ``max_iter`` without meeting
    the tolerances. The caller is responsible for primal feasibility of the
    model (this solver does not produce infeasibility certificates).
    """
    if method not in ("normal", "augmented"):
        raise ValueError(f"unknown method {method!r}")
    q = np.asarray(q, dtype=float)
    n = q.shape[0]
    A = np.zeros((0, n)) if A is None else np.asarray(A, dtype=float)
    b = np.zeros(0) if b is None else np.asarray(b, dtype=float)
    G = np.zeros((0, n)) if G is None else np.asarray(G, dtype=float)
    h = np.zeros(0) if h is None else np.asarray(h, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    me, mg = A.shape[0], G.shape[0]

    lo_idx = np.flatnonzero(np.isfinite(lo))
    hi_idx = np.flatnonzero(np.isfinite(hi))
    nlo, nhi = lo_idx.size, hi_idx.size
    if nlo + nhi + mg == 0:
        raise QPError("problem has no inequalities or bounds; nothing for the barrier to hold")
    lov = lo[lo_idx]
    hiv = hi[hi_idx]

    # Initial point: equality least-squares for x, unit slacks/duals at data scale.
    if me:
        x = np.linalg.lstsq(A, b, rcond=None)[0]
    else:
        x = np.zeros(n)
    slo = np.maximum(1.0, np.abs(x[lo_idx] - lov))
    shi = np.maximum(1.0, np.abs(hiv - x[hi_idx]))
    sg = np.maximum(1.0, np.abs(h - G @ x)) if mg else np.zeros(0)
    zlo = np.ones(nlo)
    zhi = np.ones(nhi)
    zg = np.ones(mg)
    y = np.zeros(me)

    bscale = 1.0 + (float(np.max(np.abs(b))) if me else 0.0)
    hscale = 1.0 + max(
        float(np.max(np.abs(lov))) if nlo else 0.0,
        float(np.max(np.abs(hiv))) if nhi else 0.0,
        float(np.max(np.abs(h))) if mg else 0.0,
    )
    qscale = 1.0 + float(np.max(np.abs(q))) if n else 1.0
    m_total = nlo + nhi + mg

    def px(v):
        return P @ v if P is not None else np.zeros(n)

    def ineq_adjoint(vlo, vhi, vg):
        out = np.zeros(n)
        np.subtract.at(out, lo_idx, vlo)
        np.add.at(out, hi_idx, vhi)
        if mg:
            out += G.T @ vg
        return out

    if method == "augmented":
        C = np.zeros((m_total, n))
        C[np.arange(nlo), lo_idx] = -1.0
        C[nlo + np.arange(nhi), hi_idx] = 1.0
        if mg:
            C[nlo + nhi :] = G

    best_mu = np.inf
    best = None  # (score, x, y, obj, res)
    stall = 0
    for it in range(1, max_iter + 1):
        # Residuals. Constraint forms: -x <= -lo, x <= hi, Gx <= h.
        rd = px(x) + q + (A.T @ y if me else 0.0) + ineq_adjoint(zlo, zhi, zg)
        rp = A @ x - b if me else np.zeros(0)
        rlo = -x[lo_idx] + slo + lov
        rhi = x[hi_idx] + shi - hiv
        rg = G @ x + sg - h if mg else np.zeros(0)
        gap = slo @ zlo + shi @ zhi + (sg @ zg if mg else 0.0)
        mu = gap / m_total
        obj = float(0.5 * x @ px(x) + q @ x)
        oscale = 1.0 + abs(obj + obj_offset)

        res = max(
            float(np.max(np.abs(rp))) / bscale if me else 0.0,
            max(
                float(np.max(np.abs(rlo))) if nlo else 0.0,
                float(np.max(np.abs(rhi))) if nhi else 0.0,
                float(np.max(np.abs(rg))) if mg else 0.0,
            )
            / hscale,
            float(np.max(np.abs(rd))) / qscale,
        )
        if res <= tol and gap <= gap_tol * oscale:
            return QPSolution(x=x, objective=obj, iterations=it - 1, eq_duals=y, max_residual=res)
        # Residuals may floor above target from late-stage conditioning; the
        # gap is what bounds the caller's pruning error, so weigh it harder.
        score = max(res / (300.0 * tol), gap / (2.0 * gap_tol * oscale))
        if best is None or score < best[0]:
            best = (score, x.copy(), y.copy(), obj, res)

        # Degenerate actives lose superlinear convergence; judge progress by
        # the combined score (the gap alone parks at the centering floor).
        progress = max(res / tol, gap / (gap_tol * oscale))
        if progress < best_mu * 0.95:
            best_mu = progress
            stall = 0
        else:
            stall += 1
            if stall > 40:
                break

        if method == "normal":
            wlo = zlo / slo
            whi = zhi / shi
            wg = zg / sg if mg else np.zeros(0)
            M = P.copy() if P is not None else np.zeros((n, n))
            np.add.at(M, (lo_idx, lo_idx), wlo)
            np.add.at(M, (hi_idx, hi_idx), whi)
            if mg:
                M += (G.T * wg) @ G

            reg = 1e-14 * float(np.max(np.diag(M))) + 1e-12
            factor = None
            for _ in range(5):
                try:
                    factor = cho_factor(M + reg * np.eye(n), lower=True, check_finite=False)
                    break
                except LinAlgError:
                    reg *= 1e4
            if factor is None:
                raise QPError("normal-equations matrix not positive definite")

            if me:
                MinvAT = cho_solve(factor, A.T, check_finite=False)
                schur = A @ MinvAT

            def kkt_base(rx, rp_):
                # [M A'; A 0][dx; dy] = [rx; -rp_]
                minv_rx = cho_solve(factor, rx, check_finite=False)
                if not me:
                    return minv_rx, np.zeros(0)
                dy = np.linalg.solve(schur, A @ minv_rx + rp_)
                return minv_rx - MinvAT @ dy, dy

            def kkt_solve(rx, rp_):
                # Iterative refinement against the unregularized system; late
                # iterations are ill-conditioned enough that one round is not enough.
                dx, dy = kkt_base(rx, rp_)
                for _ in range(3):
                    ex = rx - M @ dx - (A.T @ dy if me else 0.0)
                    ep = -rp_ - A @ dx if me else np.zeros(0)
                    cx, cy = kkt_base(ex, -ep)
                    dx = dx + cx
                    dy = dy + cy
                return dx, dy

            def direction(rc_lo, rc_hi, rc_g, with_residuals=True):
                if with_residuals:
                    rx = -rd + ineq_adjoint(
                        (rc_lo - zlo * rlo) / slo,
                        (rc_hi - zhi * rhi) / shi,
                        (rc_g - zg * rg) / sg if mg else np.zeros(0),
                    )
                    rp_ = rp
                else:
                    rx = ineq_adjoint(rc_lo / slo, rc_hi / shi, rc_g / sg if mg else np.zeros(0))
                    rp_ = np.zeros(me)
                dx, dy = kkt_solve(rx, rp_)
                dslo = (-rlo if with_residuals else 0.0) + dx[lo_idx]
                dshi = (-rhi if with_residuals else 0.0) - dx[hi_idx]
                if mg:
                    dsg = (-rg if with_residuals else 0.0) - G @ dx
                else:
                    dsg = np.zeros(0)
                dzlo = (-rc_lo - zlo * dslo) / slo
                dzhi = (-rc_hi - zhi * dshi) / shi
                dzg = (-rc_g - zg * dsg) / sg if mg else np.zeros(0)
                return dx, dy, dslo, dshi, dsg, dzlo, dzhi, dzg
        else:
            # Augmented KKT: [P A' C'; A 0 0; C 0 -diag(s/z)], solved by LU.
            # Avoids forming C' diag(z/s) C, whose conditioning degrades as
            # complementarity pairs split; worth the larger factorization.
            sigma_all = np.concatenate([slo / zlo, shi / zhi, (sg / zg) if mg else np.zeros(0)])
            dim = n + me + m_total
            K = np.zeros((dim, dim))
            K[:n, :n] = P if P is not None else 0.0
            if me:
                K[:n, n : n + me] = A.T
                K[n : n + me, :n] = A
            K[:n, n + me :] = C.T
            K[n + me :, :n] = C
            K[n + me :, n + me :] = -np.diag(sigma_all)
            dscale = float(np.max(np.abs(K))) + 1.0
            K[np.arange(n), np.arange(n)] += 1e-13 * dscale
            K[np.arange(n, dim), np.arange(n, dim)] -= 1e-13 * dscale
            try:
                lu = lu_factor(K, check_finite=False)
            except LinAlgError as exc:
                raise QPError(f"augmented system factorization failed: {exc}") from exc

            def direction(rc_lo, rc_hi, rc_g, with_residuals=True):
                rc_all = np.concatenate([rc_lo, rc_hi, rc_g]) if mg else np.concatenate([rc_lo, rc_hi])
                z_all = np.concatenate([zlo, zhi, zg]) if mg else np.concatenate([zlo, zhi])
                if with_residuals:
                    r_all = np.concatenate([rlo, rhi, rg]) if mg else np.concatenate([rlo, rhi])
                    rhs = np.concatenate([-rd, -rp, -r_all + rc_all / z_all])
                else:
                    rhs = np.concatenate([np.zeros(n), np.zeros(me), rc_all / z_all])
                sol = lu_solve(lu, rhs, check_finite=False)
                err = rhs - K @ sol
                sol = sol + lu_solve(lu, err, check_finite=False)
                dx = sol[:n]
                dy = sol[n : n + me]
                dz_all = sol[n + me :]
                dzlo, dzhi = dz_all[:nlo], dz_all[nlo : nlo + nhi]
                dzg = dz_all[nlo + nhi :]
                dslo = (-rc_lo - slo * dzlo) / zlo
                dshi = (-rc_hi - shi * dzhi) / zhi
                dsg = (-rc_g - sg * dzg) / zg if mg else np.zeros(0)
                return dx, dy, dslo, dshi, dsg, dzlo, dzhi, dzg

        def trial_products(d, a):
            dx_, dy_, dslo_, dshi_, dsg_, dzlo_, dzhi_, dzg_ = d
            parts = [(slo + a * dslo_) * (zlo + a * dzlo_), (shi + a * dshi_) * (zhi + a * dzhi_)]
            if mg:
                parts.append((sg + a * dsg_) * (zg + a * dzg_))
            return parts

        def step_limit(d):
            dx_, dy_, dslo_, dshi_, dsg_, dzlo_, dzhi_, dzg_ = d
            return min(
                _max_step(slo, dslo_),
                _max_step(shi, dshi_),
                _max_step(sg, dsg_) if mg else 1.0,
                _max_step(zlo, dzlo_),
                _max_step(zhi, dzhi_),
                _max_step(zg, dzg_) if mg else 1.0,
            )

        # Predictor (affine scaling) direction.
        aff = direction(slo * zlo, shi * zhi, sg * zg)
        dx_a, dy_a, dslo_a, dshi_a, dsg_a, dzlo_a, dzhi_a, dzg_a = aff
        alpha_a = min(
            _max_step(slo, dslo_a),
            _max_step(shi, dshi_a),
            _max_step(sg, dsg_a) if mg else 1.0,
            _max_step(zlo, dzlo_a),
            _max_step(zhi, dzhi_a),
            _max_step(zg, dzg_a) if mg else 1.0,
        )
        mu_aff = (
            (slo + alpha_a * dslo_a) @ (zlo + alpha_a * dzlo_a)
            + (shi + alpha_a * dshi_a) @ (zhi + alpha_a * dzhi_a)
            + ((sg + alpha_a * dsg_a) @ (zg + alpha_a * dzg_a) if mg else 0.0)
        ) / m_total
        sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0

        # Centering target. The floor keeps complementarity from collapsing
        # orders of magnitude below the convergence target while residuals
        # still lag; a collapsed gap wrecks the scaling matrix conditioning.
        center = max(sigma * mu, 0.05 * gap_tol * oscale / m_total)

        # Corrector with centering.
        corr = direction(
            slo * zlo + dslo_a * dzlo_a - center,
            shi * zhi + dshi_a * dzhi_a - center,
            sg * zg + dsg_a * dzg_a - center if mg else np.zeros(0),
        )
        alpha_max = step_limit(corr)

        # Centrality correctors: pull outlier complementarity products at an
        # ambitious trial step toward their mean, keeping the extra solves on
        # the same factorization. Breaks the small-step limit cycles that
        # plain predictor-corrector falls into on degenerate problems.
        for _ in range(2):
            a_try = min(1.0, 1.5 * alpha_max + 0.1)
            parts = trial_products(corr, a_try)
            prods = np.concatenate(parts)
            mu_t = max(float(np.sum(prods)) / m_total, 1e-300)
            target = np.clip(prods, 0.1 * mu_t, 10.0 * mu_t)
            excess = prods - target
            if float(np.max(np.abs(excess))) <= 1e-3 * mu_t:
                break
            nlo_nhi = nlo + nhi
            extra = direction(
                excess[:nlo], excess[nlo:nlo_nhi], excess[nlo_nhi:] if mg else np.zeros(0),
                with_residuals=False,
            )
            combined = tuple(c + e for c, e in zip(corr, extra))
            alpha_new = step_limit(combined)
            if alpha_new > 1.05 * alpha_max:
                corr = combined
                alpha_max = alpha_new
            else:
                break

        dx, dy, dslo, dshi, dsg, dzlo, dzhi, dzg = corr
        eta = 0.999 if gap <= 1e-2 * oscale else 0.99
        alpha = min(1.0, eta * alpha_max)

        x = x + alpha * dx
        y = y + alpha * dy
        slo = slo + alpha * dslo
        shi = shi + alpha * dshi
        zlo = zlo + alpha * dzlo
        zhi = zhi + alpha * dzhi
        if mg:
            sg = sg + alpha * dsg
            zg = zg + alpha * dzg

    # Late-stage ill-conditioning can floor the residuals slightly above the
    # target; hand back the best iterate when it is within the relaxed bands.
    if best is not None and best[0] <= 1.0:
        _, bx, by, bobj, bres = best
        return QPSolution(x=bx, objective=bobj, iterations=max_iter, eq_duals=by, max_residual=bres)
    raise QPError(f"no convergence in {max_iter} iterations (mu={mu:.3e}, residual={res:.3e})")
