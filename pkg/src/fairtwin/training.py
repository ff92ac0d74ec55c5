"""Ranking-loss training of the cost network, plus export of solver-ready costs."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .costnet import CostNet, forward_batch, init_costnet, latent_values, loss_and_grads
from .latent import LatentMap, default_ridge, project, reconstruct_cost
from .pairs import PreferenceDataset
from .quadcost import CostTable, QuadCost


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    delta: float = 1.0
    l2: float = 1e-4
    learning_rate: float = 1e-3
    batch_size: int = 64
    max_epochs: int = 2000
    patience: int = 60
    lr_decay: float = 0.5
    lr_patience: int = 20
    val_fraction: float = 0.1
    seed: int = 0
    hidden: tuple = (20, 20, 20)
    head_scale: float = 1e-2
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("margin must be positive")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("validation fraction must lie in (0, 1)")
        if self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("batch size and epoch budget must be positive")

    def to_dict(self):
        return {
            "delta": self.delta, "l2": self.l2, "learning_rate": self.learning_rate,
            "batch_size": self.batch_size, "max_epochs": self.max_epochs,
            "patience": self.patience, "lr_decay": self.lr_decay, "lr_patience": self.lr_patience,
            "val_fraction": self.val_fraction, "seed": self.seed, "hidden": list(self.hidden),
            "head_scale": self.head_scale,
            "adam": [self.adam_beta1, self.adam_beta2, self.adam_eps],
        }


@dataclass
class TrainReport:
    epochs_run: int
    best_epoch: int
    best_val_loss: float
    final_train_loss: float
    train_history: list = field(default_factory=list)
    val_history: list = field(default_factory=list)
    lr_events: list = field(default_factory=list)
    config: dict = field(default_factory=dict)
    monitor: str = "validation"


class _Adam:
    def __init__(self, params, lr, beta1, beta2, eps):
        self.lr = lr
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            p -= self.lr * (self.m[i] / b1c) / (np.sqrt(self.v[i] / b2c) + self.eps)


def _stratified_split(contexts, val_fraction, rng):
    """Per-context holdout so no context vanishes from validation entirely."""
    by_ctx: dict = {}
    for i, c in enumerate(contexts):
        by_ctx.setdefault(c, []).append(i)
    train_idx, val_idx = [], []
    for c in sorted(by_ctx):
        idx = np.array(by_ctx[c])
        idx = idx[rng.permutation(idx.size)]
        k = int(np.floor(val_fraction * idx.size + 0.5))
        k = min(k, idx.size - 1)  # never empty the training side of a context
        val_idx.extend(int(v) for v in idx[:k])
        train_idx.extend(int(v) for v in idx[k:])
    return np.array(sorted(train_idx)), np.array(sorted(val_idx))


def _mean_hinge(net, x0s, Zp, Zo, delta):
    S, q_z, _ = forward_batch(net, x0s)
    fp, _ = latent_values(S, q_z, Zp)
    fo, _ = latent_values(S, q_z, Zo)
    return float(np.mean(np.maximum(0.0, fp - fo + delta)))


def train(dataset: PreferenceDataset, lmap: LatentMap, cfg: TrainConfig):
    """Fit the cost network on canonical-order pairs; returns (net, report).

    Minimizes mean hinge ranking loss plus an l2 penalty with Adam; keeps the
    parameters from the best validation epoch. Datasets too small to split
    fall back to monitoring the training loss.
    """
    if len(dataset) == 0:
        raise TrainingError("dataset is empty")
    if dataset.dim != lmap.dim:
        raise TrainingError(f"dataset dimension {dataset.dim} does not match latent map {lmap.dim}")

    x0s = np.array([p.context for p in dataset.pairs])
    Zp = project(np.stack([p.u_pref for p in dataset.pairs]), lmap)
    Zo = project(np.stack([p.u_other for p in dataset.pairs]), lmap)

    rng = np.random.default_rng(np.random.SeedSequence((cfg.seed, 7)))
    n = len(dataset)
    if n >= 2:
        tr_idx, va_idx = _stratified_split(x0s, cfg.val_fraction, rng)
        if va_idx.size == 0:
            tr_idx = np.arange(n)
    else:
        tr_idx, va_idx = np.arange(n), np.array([], dtype=int)
    monitor = "validation" if va_idx.size else "training"

    net = init_costnet(lmap.latent_dim, hidden=cfg.hidden, seed=cfg.seed,
                       head_scale=cfg.head_scale, latent_map_hash=lmap.content_hash())
    params = list(net.parameters())
    opt = _Adam(params, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps)

    best_val = np.inf
    best_epoch = 0
    best_net = net.copy()
    since_improve = 0
    since_lr = 0
    history_t, history_v, lr_events = [], [], []
    train_loss = np.nan

    for epoch in range(1, cfg.max_epochs + 1):
        order = tr_idx[rng.permutation(tr_idx.size)]
        for start in range(0, order.size, cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            loss, _, grads = loss_and_grads(net, x0s[sel], Zp[sel], Zo[sel], cfg.delta, cfg.l2)
            if not np.isfinite(loss):
                raise TrainingError(f"training diverged at epoch {epoch} (loss {loss})")
            flat = [g for pair in grads for g in pair]
            opt.step(params, flat)

        train_loss = _mean_hinge(net, x0s[tr_idx], Zp[tr_idx], Zo[tr_idx], cfg.delta)
        val_loss = (
            _mean_hinge(net, x0s[va_idx], Zp[va_idx], Zo[va_idx], cfg.delta)
            if va_idx.size
            else train_loss
        )
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            raise TrainingError(f"training diverged at epoch {epoch}")
        history_t.append(train_loss)
        history_v.append(val_loss)

        if val_loss < best_val - 1e-12:
            best_val = val_loss
            best_epoch = epoch
            best_net = net.copy()
            since_improve = 0
            since_lr = 0
        else:
            since_improve += 1
            since_lr += 1
        if since_lr >= cfg.lr_patience:
            opt.lr *= cfg.lr_decay
            lr_events.append({"epoch": epoch, "lr": opt.lr})
            since_lr = 0
        if since_improve >= cfg.patience:
            break
        if best_val == 0.0:
            break

    # Scale of the learned cost differences; the hinge pins only the ordering,
    # so downstream consumers needing a calibrated magnitude divide by this.
    S, q_z, _ = forward_batch(best_net, x0s[tr_idx])
    fp, _ = latent_values(S, q_z, Zp[tr_idx])
    fo, _ = latent_values(S, q_z, Zo[tr_idx])
    scale = float(np.median(np.abs(fp - fo)))
    best_net.pair_scale = scale if scale > 0 else 1.0

    report = TrainReport(
        epochs_run=len(history_t),
        best_epoch=best_epoch,
        best_val_loss=best_val,
        final_train_loss=train_loss,
        train_history=history_t,
        val_history=history_v,
        lr_events=lr_events,
        config=cfg.to_dict(),
        monitor=monitor,
    )
    return best_net, report


def export_costs(net: CostNet, lmap: LatentMap, grid, ridge: float | None = None,
                 subspace_anchor: float = 0.0, curvature_boost: float = 1.0,
                 normalize_scale: bool = False) -> CostTable:
    """Query the network over a context grid and expand every cost to full space.

    Three optional conservatism controls shape how far the solver may follow
    the learned cost away from the region the preferences actually covered;
    all default off, leaving the plain expanded quadratic:

    - ``subspace_anchor``: curvature added along the orthogonal complement of
      the latent subspace, anchored at the data mean. The expanded quadratic
      is exactly flat there otherwise, letting the solver drift arbitrarily
      far from anything the preferences ever ranked.
    - ``curvature_boost``: multiplies the learned curvature, shrinking the
      cost's minimizer toward the data mean along the learned direction.
    - ``normalize_scale``: divides the learned terms by the network's
      training pair-difference scale first, so the boost acts on a magnitude
      that does not drift with training length.
    """
    grid = [float(g) for g in grid]
    if any(not 0.0 <= g <= 1.0 for g in grid):
        raise ValueError("context grid must lie in [0, 1]")
    if subspace_anchor < 0 or curvature_boost <= 0:
        raise ValueError("subspace anchor must be >= 0 and curvature boost > 0")
    if net.latent_map_hash and net.latent_map_hash != lmap.content_hash():
        raise TrainingError("latent map does not match the one the network was trained against")
    if subspace_anchor > 0:
        W = lmap.components
        proj_out = np.eye(lmap.dim) - W @ W.T
        anchor_h = subspace_anchor * proj_out
        anchor_q = -subspace_anchor * (proj_out @ lmap.mean)
    denom = net.pair_scale if normalize_scale else 1.0
    entries = []
    for x0 in sorted(grid):
        S, q_z, _ = forward_batch(net, [x0])
        h_z = (curvature_boost / denom) * (S[0] @ S[0].T)
        h_z = 0.5 * (h_z + h_z.T)
        r = default_ridge(h_z) if ridge is None else float(ridge)
        cost = reconstruct_cost(h_z, q_z[0] / denom, lmap, ridge=r, context=x0)
        if subspace_anchor > 0:
            H = cost.hessian + anchor_h
            cost = QuadCost(hessian=0.5 * (H + H.T), linear=cost.linear + anchor_q, context=x0)
        entries.append(cost)
    return CostTable(
        entries=entries,
        provenance={
            "model_hash": net.content_hash(),
            "grid": grid,
            "ridge": "per-context-default" if ridge is None else float(ridge),
            "subspace_anchor": subspace_anchor,
            "curvature_boost": curvature_boost,
            "normalize_scale": normalize_scale,
        },
    )
