"""Convex quadratic objectives keyed by a scalar context, plus their wire format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

SYM_TOL = 1e-10


class QuadCostError(ValueError):
    pass


@dataclass
class QuadCost:
    """A ``0.5 * u'Hu + q'u`` objective for one context value.

    H must be symmetric positive semidefinite (within tolerance); symmetry is
    checked at construction, the eigenvalue check is on demand via
    :meth:`assert_psd` because it is the expensive part.
    """

    hessian: np.ndarray
    linear: np.ndarray
    context: float = 0.0

    def __post_init__(self):
        self.hessian = np.asarray(self.hessian, dtype=float)
        self.linear = np.asarray(self.linear, dtype=float)
        d = self.linear.shape[0]
        if self.hessian.shape != (d, d):
            raise QuadCostError(f"hessian shape {self.hessian.shape} does not match linear ({d},)")
        scale = max(1.0, float(np.max(np.abs(self.hessian))) if d else 0.0)
        asym = float(np.max(np.abs(self.hessian - self.hessian.T))) if d else 0.0
        if asym > SYM_TOL * scale:
            raise QuadCostError(f"hessian asymmetry {asym} exceeds tolerance")

    @property
    def dim(self):
        return self.linear.shape[0]

    def psd_tolerance(self):
        norm = float(np.linalg.norm(self.hessian, 2)) if self.dim else 0.0
        return 1e-8 * max(1.0, norm)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.hessian)[0]) if self.dim else 0.0

    def assert_psd(self):
        lo = self.min_eigenvalue()
        if lo < -self.psd_tolerance():
            raise QuadCostError(f"hessian has eigenvalue {lo}, below -{self.psd_tolerance()}")

    def value(self, u: np.ndarray) -> float:
        u = np.asarray(u, dtype=float)
        return float(0.5 * u @ self.hessian @ u + self.linear @ u)


def linear_quad_cost(q: np.ndarray, context: float = 0.0) -> QuadCost:
    """Embed a purely linear objective as a QuadCost with zero curvature."""
    q = np.asarray(q, dtype=float)
    return QuadCost(hessian=np.zeros((q.shape[0], q.shape[0])), linear=q, context=context)


@dataclass
class CostTable:
    """Learned quadratic objectives over a context grid, ordered by context."""

    entries: list
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.entries = sorted(self.entries, key=lambda c: c.context)

    def __iter__(self):
        return iter(self.entries)

    def __len__(self):
        return len(self.entries)


def save_cost_table(table: CostTable, path) -> None:
    """One JSON line per context: {x0, H: row-major list, q: list}."""
    with open(path, "w") as fh:
        for cost in table:
            fh.write(
                json.dumps(
                    {
                        "x0": cost.context,
                        "H": [float(v) for v in cost.hessian.ravel(order="C")],
                        "q": [float(v) for v in cost.linear],
                    }
                )
                + "\n"
            )


def load_cost_table(path) -> CostTable:
    entries = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), start=1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise QuadCostError(f"{path}:{lineno}: not valid JSON ({exc})") from exc
        for key in ("x0", "H", "q"):
            if key not in rec:
                raise QuadCostError(f"{path}:{lineno}: missing key {key!r}")
        q = np.array(rec["q"], dtype=float)
        d = q.shape[0]
        h = np.array(rec["H"], dtype=float)
        if h.shape[0] != d * d:
            raise QuadCostError(f"{path}:{lineno}: H has {h.shape[0]} entries, expected {d * d}")
        entries.append(QuadCost(hessian=h.reshape(d, d), linear=q, context=float(rec["x0"])))
    return CostTable(entries=entries)
