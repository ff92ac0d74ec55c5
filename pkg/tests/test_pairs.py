import json

import numpy as np
import pytest

from fairtwin.instance import Allocation, generate_instance
from fairtwin.pairs import (
    DatasetError,
    PreferenceDataset,
    PreferencePair,
    build_pairs,
    load_dataset,
    save_dataset,
)
from fairtwin.scoring import ScoredSolution


@pytest.fixture(scope="module")
def synth_instance():
    return generate_instance(1, 2, 2, 1)


def make_scored(inst, contexts, per_context, seed=0):
    """Synthetic scored entries with distinct composites (feasibility irrelevant here)."""
    rng = np.random.default_rng(seed)
    out = []
    for ctx in contexts:
        for k in range(per_context):
            x = rng.uniform(0, 10, size=(inst.n_counties, inst.n_facilities))
            alloc = Allocation(x=x, y=rng.integers(0, 2, inst.n_temporary))
            composite = float(rng.uniform(0, 100))
            out.append(ScoredSolution(alloc, float(ctx), composite, 0.0, composite))
    return out


def phi_lookup(scored, inst):
    from fairtwin.instance import flatten

    return {flatten(s.allocation, inst).tobytes(): s.composite for s in scored}


def test_flip_zero_all_canonical(synth_instance):
    scored = make_scored(synth_instance, [0.0, 0.5], 6)
    ds = build_pairs(scored, synth_instance, 20, 0.0, seed=1)
    phi = phi_lookup(scored, synth_instance)
    assert len(ds) == 20
    for p in ds.pairs:
        assert not p.corrupted
        assert phi[p.u_pref.tobytes()] < phi[p.u_other.tobytes()]


def test_flip_one_all_swapped(synth_instance):
    scored = make_scored(synth_instance, [0.0, 0.5], 6)
    ds = build_pairs(scored, synth_instance, 20, 1.0, seed=1)
    phi = phi_lookup(scored, synth_instance)
    for p in ds.pairs:
        assert p.corrupted
        assert phi[p.u_pref.tobytes()] > phi[p.u_other.tobytes()]


def test_flip_count_exact(synth_instance):
    scored = make_scored(synth_instance, [0.0, 0.5], 8)
    for frac, n in ((0.25, 40), (0.3, 33), (0.1, 7)):
        ds = build_pairs(scored, synth_instance, n, frac, seed=2)
        expected = int(np.floor(frac * n + 0.5))
        assert sum(1 for p in ds.pairs if p.corrupted) == expected


def test_paper_scale_dataset_size(synth_instance):
    scored = make_scored(synth_instance, np.linspace(0, 1, 26), 20)
    ds = build_pairs(scored, synth_instance, 1344, 0.0, seed=3)
    assert len(ds) == 1344


def test_error_when_exceeding_available(synth_instance):
    scored = make_scored(synth_instance, [0.0], 3)  # 3 candidate pairs
    with pytest.raises(DatasetError, match="only 3"):
        build_pairs(scored, synth_instance, 4, 0.0, seed=0)


def test_no_cross_context_and_no_ties(synth_instance):
    scored = make_scored(synth_instance, [0.0, 1.0], 5)
    # duplicate composite within a context creates a tie that must be excluded
    tied = ScoredSolution(scored[0].allocation, 0.0, scored[1].composite, 0.0, scored[1].composite)
    scored2 = scored + [tied]
    ds = build_pairs(scored2, synth_instance, 10, 0.0, seed=4)
    ctxs = {p.context for p in ds.pairs}
    assert ctxs <= {0.0, 1.0}


def test_subsampling_uniform(synth_instance):
    scored = make_scored(synth_instance, [0.0], 3)  # 3 pairs available
    counts = {}
    for seed in range(1000):
        ds = build_pairs(scored, synth_instance, 1, 0.0, seed=seed)
        key = ds.pairs[0].u_pref.tobytes() + ds.pairs[0].u_other.tobytes()
        counts[key] = counts.get(key, 0) + 1
    assert len(counts) == 3
    p = 1.0 / 3.0
    sigma = np.sqrt(1000 * p * (1 - p))
    for c in counts.values():
        assert abs(c - 1000 * p) <= 5 * sigma


def test_build_deterministic(synth_instance):
    scored = make_scored(synth_instance, [0.0, 0.5], 6)
    a = build_pairs(scored, synth_instance, 15, 0.2, seed=9)
    b = build_pairs(scored, synth_instance, 15, 0.2, seed=9)
    for pa, pb in zip(a.pairs, b.pairs):
        assert np.array_equal(pa.u_pref, pb.u_pref)
        assert pa.corrupted == pb.corrupted


def test_save_load_round_trip(tmp_path, synth_instance):
    scored = make_scored(synth_instance, [0.0, 0.5], 5)
    ds = build_pairs(scored, synth_instance, 12, 0.25, seed=5, pool_hash="abc123")
    path = tmp_path / "ds.jsonl"
    save_dataset(ds, path)
    loaded = load_dataset(path)
    assert loaded.provenance == ds.provenance
    assert len(loaded) == len(ds)
    for a, b in zip(ds.pairs, loaded.pairs):
        assert np.array_equal(a.u_pref, b.u_pref)
        assert np.array_equal(a.u_other, b.u_other)
        assert a.corrupted == b.corrupted


def test_load_rejects_truncated(tmp_path, synth_instance):
    scored = make_scored(synth_instance, [0.0], 4)
    ds = build_pairs(scored, synth_instance, 4, 0.0, seed=6)
    path = tmp_path / "ds.jsonl"
    save_dataset(ds, path)
    text = path.read_text()
    path.write_text(text[: len(text) - 20])
    with pytest.raises(DatasetError, match="JSON"):
        load_dataset(path)


def test_load_rejects_mixed_dimensions(tmp_path, synth_instance):
    scored = make_scored(synth_instance, [0.0], 4)
    ds = build_pairs(scored, synth_instance, 3, 0.0, seed=7)
    path = tmp_path / "ds.jsonl"
    save_dataset(ds, path)
    lines = path.read_text().splitlines()
    rec = json.loads(lines[1])
    rec["u_pref"] = rec["u_pref"][:-1]
    rec["u_other"] = rec["u_other"][:-1]
    lines[1] = json.dumps(rec)
    path.write_text("\n".join(lines) + "\n")
    with pytest.raises(DatasetError, match="dimension"):
        load_dataset(path)


def test_load_rejects_missing_header(tmp_path):
    path = tmp_path / "ds.jsonl"
    path.write_text('{"x0": 0.0, "u_pref": [1], "u_other": [2], "corrupted": false}\n')
    with pytest.raises(DatasetError, match="schema"):
        load_dataset(path)


def test_pair_invariants():
    with pytest.raises(DatasetError, match="identical"):
        PreferencePair(context=0.0, u_pref=np.ones(3), u_other=np.ones(3))
    with pytest.raises(DatasetError, match="dimension"):
        PreferenceDataset(pairs=[
            PreferencePair(context=0.0, u_pref=np.ones(3), u_other=np.zeros(3)),
            PreferencePair(context=0.0, u_pref=np.ones(4), u_other=np.zeros(4)),
        ])
