"""Training-phase compression of decision vectors and exact expansion of learned costs.

Decisions are projected as ``z = W'(u - mu)`` with orthonormal principal
directions W fitted on the pooled feasible solutions. A quadratic learned in
z-coordinates maps back to the full decision space in closed form, so the
solver never sees the compressed coordinates.
"""

from __future__ import annotations

import hashlib
import json
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .quadcost import QuadCost, QuadCostError

ORTH_TOL = 1e-10


class LatentError(ValueError):
    pass


@dataclass
class LatentMap:
    components: np.ndarray  # d x r, orthonormal columns
    mean: np.ndarray        # d
    explained_variance: np.ndarray  # r, nonincreasing

    def __post_init__(self):
        self.components = np.asarray(self.components, dtype=float)
        self.mean = np.asarray(self.mean, dtype=float)
        self.explained_variance = np.asarray(self.explained_variance, dtype=float)
        d, r = self.components.shape
        if self.mean.shape != (d,):
            raise LatentError(f"mean shape {self.mean.shape} does not match components ({d}, {r})")
        gram = self.components.T @ self.components
        if float(np.max(np.abs(gram - np.eye(r)))) > ORTH_TOL:
            raise LatentError("components are not orthonormal within tolerance")

    @property
    def dim(self):
        return self.components.shape[0]

    @property
    def latent_dim(self):
        return self.components.shape[1]

    def content_hash(self) -> str:
        payload = json.dumps(
            {
                "W": [[float(v) for v in row] for row in self.components],
                "mu": [float(v) for v in self.mean],
            }
        ).encode()
        return hashlib.sha256(payload).hexdigest()


def fit_pca(U, r: int) -> LatentMap:
    """Top-r principal directions of the rows of U, sign-fixed for determinism.

    Degenerate data (rank below r) is padded with a deterministic orthonormal
    completion drawn from coordinate directions, with a warning.
    """
    U = np.asarray(U, dtype=float)
    n, d = U.shape
    if n < 2:
        raise LatentError("need at least two samples")
    if not 1 <= r <= min(n, d):
        raise LatentError(f"latent dimension {r} must lie in [1, {min(n, d)}]")
    mu = U.mean(axis=0)
    centered = U - mu
    _, svals, vt = np.linalg.svd(centered, full_matrices=False)
    rank_tol = max(n, d) * np.finfo(float).eps * (svals[0] if svals.size else 0.0)
    rank = int(np.sum(svals > rank_tol))
    k = min(r, rank)
    W = vt[:k].T.copy()
    if k < r:
        warnings.warn(
            f"data rank {rank} below requested latent dimension {r}; padding with coordinate completion",
            stacklevel=2,
        )
        cols = [W[:, i] for i in range(k)]
        for basis_idx in range(d):
            if len(cols) == r:
                break
            v = np.zeros(d)
            v[basis_idx] = 1.0
            for c in cols:
                v -= (c @ v) * c
            norm = np.linalg.norm(v)
            if norm > 1e-8:
                cols.append(v / norm)
        W = np.column_stack(cols)
    # Sign convention: the largest-magnitude entry of each column is positive.
    for j in range(W.shape[1]):
        lead = int(np.argmax(np.abs(W[:, j])))
        if W[lead, j] < 0:
            W[:, j] = -W[:, j]
    ev = np.zeros(r)
    ev[:k] = (svals[:k] ** 2) / (n - 1)
    return LatentMap(components=W, mean=mu, explained_variance=ev)


def project(u, lmap: LatentMap) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape[-1] != lmap.dim:
        raise LatentError(f"vector dimension {u.shape[-1]} does not match map dimension {lmap.dim}")
    return (u - lmap.mean) @ lmap.components


def reconstruct(z, lmap: LatentMap) -> np.ndarray:
    z = np.asarray(z, dtype=float)
    if z.shape[-1] != lmap.latent_dim:
        raise LatentError(f"latent dimension {z.shape[-1]} does not match map ({lmap.latent_dim})")
    return lmap.mean + z @ lmap.components.T


def default_ridge(h_z) -> float:
    h_z = np.asarray(h_z, dtype=float)
    d = h_z.shape[0]
    return 1e-6 * float(np.trace(h_z)) / max(1, d)


def reconstruct_cost(h_z, q_z, lmap: LatentMap, ridge: float = 0.0, context: float = 0.0) -> QuadCost:
    """Expand a latent quadratic to the full decision space.

    ``H = W Hz W' + ridge*I`` and ``q = W qz - (W Hz W') mu``; for ridge 0 the
    expanded cost equals the latent one up to a context-independent constant
    on the affine subspace ``u = mu + Wz``.
    """
    h_z = np.asarray(h_z, dtype=float)
    q_z = np.asarray(q_z, dtype=float)
    r = lmap.latent_dim
    if h_z.shape != (r, r) or q_z.shape != (r,):
        raise LatentError(f"latent cost shaped {h_z.shape}/{q_z.shape}, expected ({r},{r})/({r},)")
    if ridge < 0:
        raise LatentError("ridge must be nonnegative")
    sym_gap = float(np.max(np.abs(h_z - h_z.T))) if r else 0.0
    if sym_gap > 1e-10 * max(1.0, float(np.max(np.abs(h_z)))):
        raise QuadCostError("latent hessian not symmetric")
    h_z = 0.5 * (h_z + h_z.T)
    min_eig = float(np.linalg.eigvalsh(h_z)[0])
    if min_eig < -1e-8 * max(1.0, float(np.linalg.norm(h_z, 2))):
        raise QuadCostError(f"latent hessian has eigenvalue {min_eig}")
    W = lmap.components
    base = W @ h_z @ W.T
    base = 0.5 * (base + base.T)
    q = W @ q_z - base @ lmap.mean
    H = base + ridge * np.eye(lmap.dim)
    return QuadCost(hessian=H, linear=q, context=context)


def save_latent_map(lmap: LatentMap, path) -> None:
    payload = {
        "schema": "fairtwin-latent-map/1",
        "dim": lmap.dim,
        "latent_dim": lmap.latent_dim,
        "mean": [float(v) for v in lmap.mean],
        "components": [[float(v) for v in row] for row in lmap.components],
        "explained_variance": [float(v) for v in lmap.explained_variance],
    }
    Path(path).write_text(json.dumps(payload) + "\n")


def load_latent_map(path) -> LatentMap:
    try:
        payload = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise LatentError(f"{path}: not valid JSON ({exc})") from exc
    if payload.get("schema") != "fairtwin-latent-map/1":
        raise LatentError(f"{path}: missing or unknown schema")
    return LatentMap(
        components=np.array(payload["components"], dtype=float),
        mean=np.array(payload["mean"], dtype=float),
        explained_variance=np.array(payload["explained_variance"], dtype=float),
    )
