"""Simulated evaluator: feature summary, Rosenbrock acceptability score, composite rank.

An allocation is compressed to five normalized features, scored by a shifted
multidimensional Rosenbrock landscape (lower is better), and ranked by the
composite of that score and the nominal objective. The scalar context in
[0, 1] shifts the features, so the same allocation reads differently under
different conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .instance import Allocation, Instance, nominal_objective

CONTEXT_SHIFT = 0.1
TIE_TOL = 1e-9


class _Tie:
    def __repr__(self):
        return "Tie"


TIE = _Tie()


class ContextMismatchError(ValueError):
    pass


def feature_normalizers(inst: Instance) -> np.ndarray:
    """Scales that put each feature in [0, ~1]; zero means the feature is vacuous."""
    caps = inst.capacity_vector()
    first_existing = inst.existing_columns[0]
    temp_cap = caps[inst.temporary_columns].sum() if inst.n_temporary else 0.0
    return np.array(
        [
            caps[first_existing],
            caps[-1],
            temp_cap,
            max(inst.demand.values()) if inst.demand else 0.0,
            inst.demand_vector().sum(),
        ]
    )


def extract_features(alloc: Allocation, inst: Instance, normalizers=None) -> np.ndarray:
    """Five-feature summary: first-existing load, last-facility load, temporary
    load, largest single assignment, total demand served — each normalized."""
    norms = feature_normalizers(inst) if normalizers is None else np.asarray(normalizers, dtype=float)
    loads = alloc.x.sum(axis=0)
    raw = np.array(
        [
            loads[inst.existing_columns[0]],
            loads[-1],
            loads[inst.temporary_columns].sum() if inst.n_temporary else 0.0,
            alloc.x.max() if alloc.x.size else 0.0,
            alloc.x.sum(),
        ]
    )
    out = np.zeros(5)
    nonzero = norms > 0
    out[nonzero] = raw[nonzero] / norms[nonzero]
    return out


def rosenbrock(f) -> float:
    """Four-term chained Rosenbrock value of a 5-vector; 0 at the all-ones point."""
    f = np.asarray(f, dtype=float)
    if f.shape != (5,):
        raise ValueError(f"expected a 5-vector, got shape {f.shape}")
    heads, tails = f[:-1], f[1:]
    return float(np.sum(100.0 * (tails - heads**2) ** 2 + (1.0 - heads) ** 2))


def score(alloc: Allocation, x0: float, inst: Instance, normalizers=None) -> float:
    """Acceptability score at context ``x0``: Rosenbrock of the shifted features."""
    if not 0.0 <= x0 <= 1.0:
        raise ValueError(f"context must lie in [0, 1], got {x0}")
    return rosenbrock(extract_features(alloc, inst, normalizers) - CONTEXT_SHIFT * x0)


@dataclass
class ScoredSolution:
    """A pool entry with its context, acceptability score, and composite rank key."""

    allocation: Allocation
    context: float
    oracle_score: float
    j_orig: float
    composite: float


def score_solution(alloc: Allocation, x0: float, inst: Instance, j_orig=None, j_weight=1.0) -> ScoredSolution:
    """Score one allocation; ``j_weight`` optionally rebalances the nominal cost
    inside the composite (1.0 keeps the plain sum)."""
    j = nominal_objective(alloc, inst) if j_orig is None else float(j_orig)
    s = score(alloc, x0, inst)
    return ScoredSolution(
        allocation=alloc, context=float(x0), oracle_score=s, j_orig=j, composite=s + j_weight * j
    )


def prefer(a: ScoredSolution, b: ScoredSolution):
    """Order two same-context solutions by composite score; TIE within tolerance."""
    if a.context != b.context:
        raise ContextMismatchError(f"contexts differ: {a.context} vs {b.context}")
    gap = abs(a.composite - b.composite)
    if gap <= TIE_TOL * max(1.0, abs(a.composite), abs(b.composite)):
        return TIE
    return (a, b) if a.composite < b.composite else (b, a)
