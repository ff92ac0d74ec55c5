"""Pairwise preference dataset construction, with subsampling and label flipping.

Supervision is carried purely by ordering: every stored pair puts the
preferred decision first. Flipping a label therefore swaps the two vectors
(and sets a bookkeeping flag the learner never sees).
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .instance import Instance, flatten
from .scoring import TIE, ScoredSolution, prefer


class DatasetError(ValueError):
    pass


@dataclass
class PreferencePair:
    context: float
    u_pref: np.ndarray
    u_other: np.ndarray
    corrupted: bool = False

    def __post_init__(self):
        self.u_pref = np.asarray(self.u_pref, dtype=float)
        self.u_other = np.asarray(self.u_other, dtype=float)
        if self.u_pref.shape != self.u_other.shape:
            raise DatasetError("pair sides have different dimensions")
        if np.array_equal(self.u_pref, self.u_other):
            raise DatasetError("pair sides are identical")


@dataclass
class PreferenceDataset:
    pairs: list
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        dims = {p.u_pref.shape[0] for p in self.pairs}
        if len(dims) > 1:
            raise DatasetError(f"pairs mix decision dimensions: {sorted(dims)}")

    def __len__(self):
        return len(self.pairs)

    @property
    def dim(self):
        return self.pairs[0].u_pref.shape[0] if self.pairs else 0


def _candidate_pairs(scored):
    """Unordered same-context pairs with distinct composite scores, canonical order."""
    by_ctx: dict = {}
    for s in scored:
        by_ctx.setdefault(s.context, []).append(s)
    candidates: dict = {}
    for ctx in sorted(by_ctx):
        group = by_ctx[ctx]
        pairs = []
        for a, b in itertools.combinations(group, 2):
            ordered = prefer(a, b)
            if ordered is not TIE:
                pairs.append(ordered)
        candidates[ctx] = pairs
    return candidates


def build_pairs(
    scored,
    inst: Instance,
    n_pairs: int,
    flip_fraction: float,
    seed: int,
    pool_hash: str = "",
) -> PreferenceDataset:
    """Subsample preference pairs uniformly per context (allocation proportional
    to each context's candidate count), then corrupt a fraction by swapping."""
    if n_pairs < 1:
        raise DatasetError("need at least one pair")
    if not 0.0 <= flip_fraction <= 1.0:
        raise DatasetError(f"flip fraction must lie in [0, 1], got {flip_fraction}")

    candidates = _candidate_pairs(scored)
    contexts = sorted(candidates)
    avail = {c: len(candidates[c]) for c in contexts}
    total = sum(avail.values())
    if n_pairs > total:
        raise DatasetError(f"requested {n_pairs} pairs but only {total} distinct pairs exist")

    rng = np.random.default_rng(np.random.SeedSequence((seed, 0)))
    quota = {c: int(np.floor(n_pairs * avail[c] / total)) for c in contexts}
    remaining = n_pairs - sum(quota.values())
    while remaining > 0:
        order = list(rng.permutation(len(contexts)))
        for pos in order:
            c = contexts[pos]
            if remaining == 0:
                break
            if quota[c] < avail[c]:
                quota[c] += 1
                remaining -= 1

    pairs = []
    for c in contexts:
        k = quota[c]
        if k == 0:
            continue
        chosen = rng.choice(avail[c], size=k, replace=False)
        for idx in sorted(int(i) for i in chosen):
            winner, loser = candidates[c][idx]
            pairs.append(
                PreferencePair(
                    context=c,
                    u_pref=flatten(winner.allocation, inst),
                    u_other=flatten(loser.allocation, inst),
                )
            )

    n_flip = int(np.floor(flip_fraction * n_pairs + 0.5))
    if n_flip:
        flip_idx = rng.choice(n_pairs, size=n_flip, replace=False)
        for i in flip_idx:
            p = pairs[int(i)]
            p.u_pref, p.u_other = p.u_other, p.u_pref
            p.corrupted = True

    return PreferenceDataset(
        pairs=pairs,
        provenance={
            "pool_hash": pool_hash,
            "pairs_per_context": {repr(c): quota[c] for c in contexts},
            "n_pairs": n_pairs,
            "flip_fraction": flip_fraction,
            "seed": seed,
        },
    )


SCHEMA = "fairtwin-preference-dataset/1"


def save_dataset(ds: PreferenceDataset, path) -> None:
    """Header line with provenance, then one JSON line per pair."""
    with open(path, "w") as fh:
        fh.write(json.dumps({"schema": SCHEMA, "provenance": ds.provenance}) + "\n")
        for p in ds.pairs:
            fh.write(
                json.dumps(
                    {
                        "x0": p.context,
                        "u_pref": [float(v) for v in p.u_pref],
                        "u_other": [float(v) for v in p.u_other],
                        "corrupted": p.corrupted,
                    }
                )
                + "\n"
            )


def load_dataset(path) -> PreferenceDataset:
    lines = Path(path).read_text().splitlines()
    if not lines:
        raise DatasetError(f"{path}: empty dataset file")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as exc:
        raise DatasetError(f"{path}:1: not valid JSON ({exc})") from exc
    if not isinstance(header, dict) or header.get("schema") != SCHEMA:
        raise DatasetError(f"{path}: missing or unknown schema header")
    pairs = []
    dim = None
    for lineno, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except json.JSONDecodeError as exc:
            raise DatasetError(f"{path}:{lineno}: not valid JSON ({exc})") from exc
        for key in ("x0", "u_pref", "u_other", "corrupted"):
            if key not in rec:
                raise DatasetError(f"{path}:{lineno}: missing key {key!r}")
        pair = PreferencePair(
            context=float(rec["x0"]),
            u_pref=np.array(rec["u_pref"], dtype=float),
            u_other=np.array(rec["u_other"], dtype=float),
            corrupted=bool(rec["corrupted"]),
        )
        if dim is None:
            dim = pair.u_pref.shape[0]
        elif pair.u_pref.shape[0] != dim:
            raise DatasetError(f"{path}:{lineno}: dimension {pair.u_pref.shape[0]} != {dim}")
        pairs.append(pair)
    return PreferenceDataset(pairs=pairs, provenance=header.get("provenance", {}))
