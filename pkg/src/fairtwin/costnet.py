"""Context-conditioned quadratic-cost generator network.

A small ReLU MLP maps the scalar context to a factor S and a linear term, and
the latent cost is ``0.5 z'(SS')z + q'z``: positive semidefinite curvature by
construction, with the usual orthogonal gauge freedom in S. Both sides of a
preference pair are evaluated through the same parameters, so one backward
pass enforces the pairwise ordering directly.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


class CostNetError(ValueError):
    pass


@dataclass
class CostNet:
    weights: list          # per layer: (W, b)
    latent_dim: int
    hidden: tuple = (20, 20, 20)
    latent_map_hash: str = ""
    pair_scale: float = 1.0  # median |f_pref - f_other| on the training pairs

    @property
    def out_dim(self):
        return self.latent_dim * self.latent_dim + self.latent_dim

    def parameters(self):
        for W, b in self.weights:
            yield W
            yield b

    def copy(self):
        return CostNet(
            weights=[(W.copy(), b.copy()) for W, b in self.weights],
            latent_dim=self.latent_dim,
            hidden=self.hidden,
            latent_map_hash=self.latent_map_hash,
            pair_scale=self.pair_scale,
        )

    def content_hash(self) -> str:
        blob = json.dumps(_net_payload(self)).encode()
        return hashlib.sha256(blob).hexdigest()


def init_costnet(latent_dim: int, hidden=(20, 20, 20), seed: int = 0, head_scale: float = 1e-2,
                 latent_map_hash: str = "") -> CostNet:
    """Fan-in-scaled uniform weights, zero biases, deliberately small output head
    so the initial curvature is near zero."""
    rng = np.random.default_rng(np.random.SeedSequence((seed, 101)))
    sizes = [1, *hidden, latent_dim * latent_dim + latent_dim]
    weights = []
    for i in range(len(sizes) - 1):
        fan_in = sizes[i]
        scale = 1.0 / np.sqrt(fan_in)
        W = rng.uniform(-scale, scale, size=(sizes[i], sizes[i + 1]))
        if i == len(sizes) - 2:
            W = W * head_scale
        weights.append((W, np.zeros(sizes[i + 1])))
    return CostNet(weights=weights, latent_dim=latent_dim, hidden=tuple(hidden),
                   latent_map_hash=latent_map_hash)


def forward_batch(net: CostNet, contexts):
    """Forward pass on a batch of contexts; returns (S, q_z, cache for backprop)."""
    x = np.asarray(contexts, dtype=float).reshape(-1, 1)
    acts = [x]
    pre = []
    a = x
    n_layers = len(net.weights)
    for i, (W, b) in enumerate(net.weights):
        hpre = a @ W + b
        pre.append(hpre)
        a = hpre if i == n_layers - 1 else np.maximum(hpre, 0.0)
        acts.append(a)
    out = acts[-1]
    r = net.latent_dim
    S = out[:, : r * r].reshape(-1, r, r)
    q_z = out[:, r * r :]
    return S, q_z, (acts, pre)


def forward(net: CostNet, x0: float):
    """(S, q_z) for one context; the latent hessian is S @ S.T."""
    S, q_z, _ = forward_batch(net, [x0])
    return S[0], q_z[0]


def latent_values(S, q_z, Z):
    """0.5||S'z||^2 + q'z for batched S (B,r,r), q_z (B,r), Z (B,r)."""
    v = np.einsum("bij,bi->bj", S, Z)
    return 0.5 * np.einsum("bj,bj->b", v, v) + np.einsum("bj,bj->b", q_z, Z), v


def eval_latent_cost(net: CostNet, z, x0: float) -> float:
    z = np.asarray(z, dtype=float)
    if z.shape != (net.latent_dim,):
        raise CostNetError(f"latent vector shaped {z.shape}, expected ({net.latent_dim},)")
    S, q_z, _ = forward_batch(net, [x0])
    vals, _ = latent_values(S, q_z, z.reshape(1, -1))
    return float(vals[0])


def hinge_loss(net: CostNet, batch, delta: float) -> float:
    """Sum over canonical-order latent pairs of max(0, f_pref - f_other + delta)."""
    if not batch:
        return 0.0
    x0s = np.array([p[0] for p in batch], dtype=float)
    Zp = np.stack([np.asarray(p[1], dtype=float) for p in batch])
    Zo = np.stack([np.asarray(p[2], dtype=float) for p in batch])
    S, q_z, _ = forward_batch(net, x0s)
    fp, _ = latent_values(S, q_z, Zp)
    fo, _ = latent_values(S, q_z, Zo)
    return float(np.sum(np.maximum(0.0, fp - fo + delta)))


def loss_and_grads(net: CostNet, x0s, Zp, Zo, delta: float, l2: float = 0.0):
    """Mean hinge loss plus l2 penalty, with gradients for every parameter.

    The hinge subgradient at the kink is taken as zero (margin treated as
    satisfied), so only strictly violated pairs contribute.
    """
    B = x0s.shape[0]
    r = net.latent_dim
    S, q_z, (acts, pre) = forward_batch(net, x0s)
    fp, vp = latent_values(S, q_z, Zp)
    fo, vo = latent_values(S, q_z, Zo)
    margins = fp - fo + delta
    active = margins > 0.0
    hinge_mean = float(np.sum(np.maximum(margins, 0.0))) / B

    scale = active.astype(float) / B
    dS = np.einsum("b,bi,bj->bij", scale, Zp, vp) - np.einsum("b,bi,bj->bij", scale, Zo, vo)
    dq = scale[:, None] * (Zp - Zo)
    dout = np.concatenate([dS.reshape(B, r * r), dq], axis=1)

    grads = [None] * len(net.weights)
    delta_a = dout
    for i in range(len(net.weights) - 1, -1, -1):
        W, _ = net.weights[i]
        a_prev = acts[i]
        dW = a_prev.T @ delta_a
        db = delta_a.sum(axis=0)
        if l2:
            dW = dW + 2.0 * l2 * W
            db = db + 2.0 * l2 * net.weights[i][1]
        grads[i] = (dW, db)
        if i > 0:
            delta_a = (delta_a @ W.T) * (pre[i - 1] > 0.0)

    penalty = 0.0
    if l2:
        penalty = l2 * sum(float(np.sum(W**2)) + float(np.sum(b**2)) for W, b in net.weights)
    return hinge_mean + penalty, hinge_mean, grads


def gradient_check(net: CostNet, pair, delta: float, l2: float = 0.0, step: float = 1e-5) -> float:
    """Max discrepancy between analytic and central-difference gradients on one pair.

    Meaningful only away from the hinge kink and ReLU kinks; the returned value
    is max over parameters of |analytic - numeric| / max(1, |analytic|, |numeric|).
    """
    x0, zp, zo = pair
    x0s = np.array([x0], dtype=float)
    Zp = np.asarray(zp, dtype=float).reshape(1, -1)
    Zo = np.asarray(zo, dtype=float).reshape(1, -1)
    _, _, grads = loss_and_grads(net, x0s, Zp, Zo, delta, l2)

    def total_loss():
        loss, _, _ = loss_and_grads(net, x0s, Zp, Zo, delta, l2)
        return loss

    worst = 0.0
    for li, (W, b) in enumerate(net.weights):
        for arr, g in ((W, grads[li][0]), (b, grads[li][1])):
            flat = arr.ravel()
            gflat = g.ravel()
            for k in range(flat.size):
                orig = flat[k]
                flat[k] = orig + step
                up = total_loss()
                flat[k] = orig - step
                down = total_loss()
                flat[k] = orig
                numeric = (up - down) / (2.0 * step)
                err = abs(gflat[k] - numeric) / max(1.0, abs(gflat[k]), abs(numeric))
                worst = max(worst, err)
    return worst


def _net_payload(net: CostNet) -> dict:
    return {
        "schema": "fairtwin-costnet/1",
        "latent_dim": net.latent_dim,
        "hidden": list(net.hidden),
        "latent_map_hash": net.latent_map_hash,
        "pair_scale": net.pair_scale,
        "layers": [
            {"W": [[float(v) for v in row] for row in W], "b": [float(v) for v in b]}
            for W, b in net.weights
        ],
    }


def save_costnet(net: CostNet, path) -> None:
    Path(path).write_text(json.dumps(_net_payload(net)) + "\n")


def load_costnet(path) -> CostNet:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise CostNetError(f"{path}: not valid JSON ({exc})") from exc
    if payload.get("schema") != "fairtwin-costnet/1":
        raise CostNetError(f"{path}: missing or unknown schema")
    weights = [
        (np.array(layer["W"], dtype=float), np.array(layer["b"], dtype=float))
        for layer in payload["layers"]
    ]
    return CostNet(
        weights=weights,
        latent_dim=int(payload["latent_dim"]),
        hidden=tuple(payload["hidden"]),
        latent_map_hash=payload.get("latent_map_hash", ""),
        pair_scale=float(payload.get("pair_scale", 1.0)),
    )
