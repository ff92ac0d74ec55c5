"""Reintegration of learned costs into the solver and win/trade-off reporting.

For every context the learned quadratic replaces the nominal objective over
the unchanged feasible set; a win is a strictly lower composite (nominal cost
plus acceptability score) than the nominal solution achieves under the same
context. The experiment harness sweeps dataset sizes, corruption levels, and
seeds, and aggregates win counts and per-context trade-off statistics.
"""

from __future__ import annotations

import csv
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .engine import SolveStatus, solve_milp, solve_miqp
from .instance import Instance, check_feasible, flatten, nominal_objective
from .latent import fit_pca
from .pairs import build_pairs
from .pool import generate_pool, uniform_contexts
from .quadcost import QuadCost
from .scoring import score, score_solution
from .training import TrainConfig, export_costs, train

IDENTITY_TOL = 1e-9


class EvaluationError(RuntimeError):
    pass


@dataclass
class ContextResult:
    context: float
    j_nom: float
    j_sur: float
    r_nom: float
    r_sur: float
    composite_nom: float
    composite_sur: float
    win: bool
    delta_r: float
    delta_j: float

    def to_dict(self):
        return {
            "x0": self.context, "j_nom": self.j_nom, "j_sur": self.j_sur,
            "r_nom": self.r_nom, "r_sur": self.r_sur,
            "composite_nom": self.composite_nom, "composite_sur": self.composite_sur,
            "win": self.win, "delta_r": self.delta_r, "delta_j": self.delta_j,
        }


def evaluate_context(inst: Instance, cost: QuadCost, x0: float, nominal=None) -> ContextResult:
    """Solve the reintegrated problem at one context and compare composites."""
    if abs(cost.context - x0) > 1e-12:
        raise EvaluationError(f"cost was exported for context {cost.context}, not {x0}")
    if nominal is None:
        nominal = solve_milp(inst)
    if nominal.status is not SolveStatus.OPTIMAL:
        raise EvaluationError(f"nominal solve failed: {nominal.status}")
    sur = solve_miqp(inst, cost)
    if sur.status is not SolveStatus.OPTIMAL:
        raise EvaluationError(f"reintegrated solve failed: {sur.status}")
    bad = check_feasible(sur.allocation, inst)
    if bad:
        raise EvaluationError(f"surrogate solution violates original constraints: {bad[0]}")

    j_nom = nominal_objective(nominal.allocation, inst)
    j_sur = nominal_objective(sur.allocation, inst)
    r_nom = score(nominal.allocation, x0, inst)
    r_sur = score(sur.allocation, x0, inst)
    comp_nom = j_nom + r_nom
    comp_sur = j_sur + r_sur
    result = ContextResult(
        context=float(x0), j_nom=j_nom, j_sur=j_sur, r_nom=r_nom, r_sur=r_sur,
        composite_nom=comp_nom, composite_sur=comp_sur,
        win=bool(comp_sur < comp_nom),
        delta_r=r_nom - r_sur, delta_j=j_sur - j_nom,
    )
    # Arithmetic cross-check: acceptability gain minus efficiency loss must
    # reproduce the composite improvement exactly.
    audit = abs((result.delta_r - result.delta_j) - (comp_nom - comp_sur))
    if audit > IDENTITY_TOL:
        raise EvaluationError(f"trade-off identity violated by {audit}")
    return result


@dataclass
class CellResult:
    size: int
    flip: float
    seed: int
    wins: int = 0
    contexts: list = field(default_factory=list)
    error: str | None = None
    train_epochs: int = 0
    best_val_loss: float = np.nan
    seconds: float = 0.0

    def to_dict(self):
        # timing intentionally excluded: identical configs must produce
        # byte-identical report files
        return {
            "size": self.size, "flip": self.flip, "seed": self.seed, "wins": self.wins,
            "n_contexts": len(self.contexts), "error": self.error,
            "train_epochs": self.train_epochs,
            "best_val_loss": None if np.isnan(self.best_val_loss) else self.best_val_loss,
            "contexts": [c.to_dict() for c in self.contexts],
        }


@dataclass
class ExperimentReport:
    cells: list
    config: dict = field(default_factory=dict)

    def mean_wins(self) -> dict:
        table: dict = {}
        for cell in self.cells:
            if cell.error:
                continue
            table.setdefault((cell.size, cell.flip), []).append(cell.wins)
        return {key: float(np.mean(v)) for key, v in sorted(table.items())}

    def tradeoff_rows(self) -> list:
        """Per (size, flip, x0): across-seed mean and sample std of the trade-offs."""
        grouped: dict = {}
        for cell in self.cells:
            if cell.error:
                continue
            for cr in cell.contexts:
                grouped.setdefault((cell.size, cell.flip, cr.context), []).append(cr)
        rows = []
        for (size, flip, x0), results in sorted(grouped.items()):
            dr = np.array([c.delta_r for c in results])
            dj = np.array([c.delta_j for c in results])
            std_dr = float(np.std(dr, ddof=1)) if dr.size > 1 else 0.0
            std_dj = float(np.std(dj, ddof=1)) if dj.size > 1 else 0.0
            rows.append({
                "dataset_size": size, "flip_fraction": flip, "x0": x0,
                "mean_dR": float(np.mean(dr)), "std_dR": std_dr,
                "mean_dJ": float(np.mean(dj)), "std_dJ": std_dj,
            })
        return rows

    def to_dict(self):
        return {
            "config": self.config,
            "cells": [c.to_dict() for c in self.cells],
            "mean_wins": [
                {"size": k[0], "flip": k[1], "mean_wins": v} for k, v in self.mean_wins().items()
            ],
        }


def _derived_seed(*parts) -> int:
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


def _seed_stage(inst, seed, train_contexts, n_per_context, lam, lam_scale, w, latent_dim, j_weight):
    """Per-seed shared work: pool, scoring, latent map, nominal baseline."""
    if lam is None and lam_scale is not None:
        nominal = solve_milp(inst)
        lam = lam_scale * abs(nominal.objective) / max(1, inst.dim)
    pool = generate_pool(inst, train_contexts, n_per_context, lam=lam, w=w, seed=seed)
    scored = [
        score_solution(e.allocation, e.context, inst, j_orig=e.j_orig, j_weight=j_weight)
        for e in pool.entries
    ]
    U = np.stack([flatten(e.allocation, inst) for e in pool.entries])
    r = min(latent_dim, U.shape[0], U.shape[1])
    lmap = fit_pca(U, r)
    nominal = solve_milp(inst)
    return scored, lmap, nominal, pool.generation_config


def _run_cell(inst, scored, lmap, nominal, seed, size, flip, train_cfg, eval_grid, ridge,
              subspace_anchor=0.0, curvature_boost=1.0, normalize_scale=False, pool_hash=""):
    start = time.perf_counter()
    cell = CellResult(size=size, flip=flip, seed=seed)
    try:
        ds_seed = _derived_seed(seed, 11, size, round(flip * 1000))
        ds = build_pairs(scored, inst, size, flip, ds_seed, pool_hash=pool_hash)
        cfg = replace(train_cfg, seed=_derived_seed(seed, 13, size, round(flip * 1000)))
        net, report = train(ds, lmap, cfg)
        table = export_costs(net, lmap, eval_grid, ridge, subspace_anchor=subspace_anchor,
                             curvature_boost=curvature_boost, normalize_scale=normalize_scale)
        cell.train_epochs = report.epochs_run
        cell.best_val_loss = report.best_val_loss
        for cost in table:
            cr = evaluate_context(inst, cost, cost.context, nominal=nominal)
            cell.contexts.append(cr)
        cell.wins = sum(1 for c in cell.contexts if c.win)
    except Exception as exc:  # noqa: BLE001 - cells fail independently
        cell.error = f"{type(exc).__name__}: {exc}"
    cell.seconds = time.perf_counter() - start
    return cell


def run_experiment(
    inst: Instance,
    sizes,
    flips,
    seeds,
    train_cfg: TrainConfig | None = None,
    eval_grid_size: int = 52,
    train_grid_size: int = 26,
    n_per_context: int = 20,
    lam: float | None = None,
    lam_scale: float | None = None,
    w: float | None = None,
    latent_dim: int = 30,
    ridge: float | None = None,
    subspace_anchor: float = 0.0,
    curvature_boost: float = 1.0,
    normalize_scale: bool = False,
    j_weight: float = 1.0,
    cells=None,
    n_jobs: int = 1,
) -> ExperimentReport:
    """Full sweep: pools per seed, datasets per cell, training, reintegration.

    ``cells`` optionally restricts the (size, flip) cross product to explicit
    pairs. Any stage failure marks its cell but does not stop the sweep.
    """
    sizes = [int(s) for s in sizes]
    flips = [float(f) for f in flips]
    seeds = [int(s) for s in seeds]
    if len(set(seeds)) != len(seeds):
        raise ValueError("seeds must be distinct")
    train_cfg = train_cfg or TrainConfig()
    train_contexts = uniform_contexts(train_grid_size)
    eval_grid = uniform_contexts(eval_grid_size)
    cell_specs = [(int(s), float(f)) for s, f in cells] if cells else [
        (s, f) for s in sizes for f in flips
    ]

    stage_args = [
        (inst, seed, train_contexts, n_per_context, lam, lam_scale, w, latent_dim, j_weight)
        for seed in seeds
    ]
    if n_jobs > 1 and len(seeds) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            stage_out = list(pool.map(_seed_stage_star, stage_args))
    else:
        stage_out = [_seed_stage(*args) for args in stage_args]

    cell_args = []
    for seed, (scored, lmap, nominal, _) in zip(seeds, stage_out):
        for size, flip in cell_specs:
            cell_args.append((inst, scored, lmap, nominal, seed, size, flip, train_cfg,
                              eval_grid, ridge, subspace_anchor, curvature_boost, normalize_scale))
    if n_jobs > 1 and len(cell_args) > 1:
        with ProcessPoolExecutor(max_workers=n_jobs) as pool:
            cells_out = list(pool.map(_run_cell_star, cell_args))
    else:
        cells_out = [_run_cell(*args) for args in cell_args]

    config = {
        "sizes": sizes, "flips": flips, "seeds": seeds,
        "eval_grid": eval_grid_size, "train_grid": train_grid_size,
        "n_per_context": n_per_context, "lambda": lam, "lambda_scale": lam_scale, "width": w,
        "latent_dim": latent_dim, "ridge": ridge, "subspace_anchor": subspace_anchor,
        "curvature_boost": curvature_boost, "normalize_scale": normalize_scale,
        "j_weight": j_weight,
        "cells": cell_specs, "train_config": train_cfg.to_dict(),
        "pool_configs": {str(seed): out[3] for seed, out in zip(seeds, stage_out)},
    }
    return ExperimentReport(cells=cells_out, config=config)


def _seed_stage_star(args):
    return _seed_stage(*args)


def _run_cell_star(args):
    return _run_cell(*args)


def save_report(report: ExperimentReport, path) -> None:
    with open(path, "w") as fh:
        json.dump(report.to_dict(), fh, indent=1)
        fh.write("\n")


def emit_tradeoff_csv(report: ExperimentReport, path) -> None:
    """Across-seed mean and sample standard deviation of the per-context trade-offs."""
    rows = report.tradeoff_rows()
    fieldnames = ["dataset_size", "flip_fraction", "x0", "mean_dR", "std_dR", "mean_dJ", "std_dJ"]
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        writer.writerows(rows)


def format_win_table(report: ExperimentReport) -> str:
    """Plain-text summary: mean wins per dataset size and flip fraction."""
    wins = report.mean_wins()
    sizes = sorted({k[0] for k in wins})
    flips = sorted({k[1] for k in wins})
    grid = report.config.get("eval_grid", "?")
    lines = [f"mean wins out of {grid} contexts (across seeds)"]
    header = "size".rjust(8) + "".join(f"{f * 100:>9.0f}%" for f in flips)
    lines.append(header)
    for s in sizes:
        row = f"{s:>8}"
        for f in flips:
            v = wins.get((s, f))
            row += f"{v:>10.3f}" if v is not None else "         -"
        lines.append(row)
    return "\n".join(lines)
