"""Diverse feasible allocations per context, produced by bias-perturbed solves.

For each context the pool holds the nominal optimum plus a batch of
suboptimal-but-feasible allocations, each obtained by pulling the objective
toward a randomly perturbed reference configuration. Contexts get independent
counter-based RNG substreams, so regeneration is reproducible entry by entry.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .engine import EngineError, SolveStatus, solve_biased, solve_milp
from .instance import Allocation, Instance, check_feasible, flatten, nominal_objective, unflatten


class PoolError(RuntimeError):
    pass


def uniform_contexts(k: int) -> list:
    """k evenly spaced context values spanning [0, 1]."""
    if k < 1:
        raise ValueError("need at least one context")
    if k == 1:
        return [0.0]
    return [float(v) for v in np.linspace(0.0, 1.0, k)]


@dataclass
class PoolEntry:
    context: float
    allocation: Allocation
    j_orig: float


@dataclass
class SolutionPool:
    entries: list
    generation_config: dict = field(default_factory=dict)
    duplicate_warnings: int = 0

    def __len__(self):
        return len(self.entries)

    def by_context(self) -> dict:
        grouped: dict = {}
        for e in self.entries:
            grouped.setdefault(e.context, []).append(e)
        return grouped


def sample_bias(optimum: Allocation, w: float, rng, w_y: float = 0.5):
    """Uniform box perturbation around the optimum; activation targets clipped to [0, 1]."""
    if w <= 0:
        raise ValueError(f"perturbation width must be positive, got {w}")
    x_bias = optimum.x + rng.uniform(-w, w, size=optimum.x.shape)
    y_bias = np.clip(optimum.y + rng.uniform(-w_y, w_y, size=optimum.y.shape), 0.0, 1.0)
    return x_bias, y_bias


def default_bias_weight(inst: Instance, nominal_obj: float) -> float:
    return 1e-3 * abs(nominal_obj) / max(1, inst.dim)


def default_bias_width(inst: Instance) -> float:
    return 0.25 * max(inst.demand.values())


def generate_pool(
    inst: Instance,
    contexts,
    n_per_context: int,
    lam: float | None = None,
    w: float | None = None,
    seed: int = 0,
    w_y: float = 0.5,
    retry_budget: int = 5,
) -> SolutionPool:
    """Nominal optimum plus ``n_per_context - 1`` biased solves per context.

    Duplicates (identical decision vectors within tolerance) are replaced by
    fresh draws until the retry budget runs out, in which case the context
    keeps fewer entries and the pool's warning counter is bumped.
    """
    contexts = [float(c) for c in contexts]
    if any(not 0.0 <= c <= 1.0 for c in contexts):
        raise ValueError("contexts must lie in [0, 1]")
    if n_per_context < 1:
        raise ValueError("need at least one entry per context")

    nominal = solve_milp(inst)
    if nominal.status is not SolveStatus.OPTIMAL:
        raise PoolError(f"nominal problem not solvable: {nominal.status}")
    lam = default_bias_weight(inst, nominal.objective) if lam is None else float(lam)
    w = default_bias_width(inst) if w is None else float(w)
    dup_tol = inst.feas_tol

    entries = []
    warnings = 0
    for ctx_idx, x0 in enumerate(contexts):
        seen = [flatten(nominal.allocation, inst)]
        entries.append(PoolEntry(context=x0, allocation=nominal.allocation, j_orig=nominal.objective))
        produced = 1
        draw = 0
        retries_left = retry_budget
        while produced < n_per_context:
            rng = np.random.default_rng(np.random.SeedSequence((seed, ctx_idx, draw)))
            draw += 1
            x_bias, y_bias = sample_bias(nominal.allocation, w, rng, w_y=w_y)
            result = solve_biased(inst, x_bias, y_bias, lam)
            if result.status is not SolveStatus.OPTIMAL:
                raise PoolError(f"biased solve failed at context {x0}: {result.status}")
            bad = check_feasible(result.allocation, inst)
            if bad:
                raise PoolError(f"biased solve returned infeasible allocation: {bad[0]}")
            u = flatten(result.allocation, inst)
            if any(float(np.max(np.abs(u - v))) <= dup_tol for v in seen):
                if retries_left > 0:
                    retries_left -= 1
                    continue
                warnings += 1
                produced += 1  # give up on this slot
                retries_left = retry_budget
                continue
            seen.append(u)
            entries.append(
                PoolEntry(
                    context=x0,
                    allocation=result.allocation,
                    j_orig=nominal_objective(result.allocation, inst),
                )
            )
            produced += 1
            retries_left = retry_budget

    return SolutionPool(
        entries=entries,
        generation_config={
            "contexts": contexts,
            "n_per_context": n_per_context,
            "lambda": lam,
            "width": w,
            "width_y": w_y,
            "seed": seed,
        },
        duplicate_warnings=warnings,
    )


def save_pool(pool: SolutionPool, path, inst: Instance) -> None:
    """One JSON line per entry: {x0, u, j_orig}; deterministic byte-for-byte."""
    with open(path, "w") as fh:
        for e in pool.entries:
            u = [float(v) for v in flatten(e.allocation, inst)]
            fh.write(json.dumps({"x0": e.context, "u": u, "j_orig": e.j_orig}) + "\n")


def load_pool(path, inst: Instance) -> SolutionPool:
    entries = []
    tol = 1e-6 * max(1.0, *(abs(v) for v in inst.demand.values()))
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise PoolError(f"{path}:{lineno}: not valid JSON ({exc})") from exc
        for key in ("x0", "u", "j_orig"):
            if key not in rec:
                raise PoolError(f"{path}:{lineno}: missing key {key!r}")
        alloc = unflatten(np.array(rec["u"], dtype=float), inst)
        bad = check_feasible(alloc, inst)
        if bad:
            raise PoolError(f"{path}:{lineno}: infeasible entry: {bad[0]}")
        j = nominal_objective(alloc, inst)
        if abs(j - float(rec["j_orig"])) > tol * (1.0 + abs(j)):
            raise PoolError(f"{path}:{lineno}: j_orig {rec['j_orig']} does not match recomputed {j}")
        entries.append(PoolEntry(context=float(rec["x0"]), allocation=alloc, j_orig=float(rec["j_orig"])))
    return SolutionPool(entries=entries)
