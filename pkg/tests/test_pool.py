import numpy as np
import pytest

from fairtwin.engine import solve_milp
from fairtwin.instance import check_feasible, flatten
from fairtwin.pool import (
    PoolError,
    generate_pool,
    load_pool,
    sample_bias,
    save_pool,
    uniform_contexts,
)


def test_uniform_contexts():
    assert uniform_contexts(1) == [0.0]
    grid = uniform_contexts(26)
    assert len(grid) == 26
    assert grid[0] == 0.0 and grid[-1] == 1.0


def test_sample_bias_degenerate_width(small_instance):
    nominal = solve_milp(small_instance)
    rng = np.random.default_rng(0)
    x_bias, _ = sample_bias(nominal.allocation, 1e-12, rng)
    assert np.allclose(x_bias, nominal.allocation.x, atol=1e-11)


def test_sample_bias_deterministic(small_instance):
    nominal = solve_milp(small_instance)
    a = sample_bias(nominal.allocation, 10.0, np.random.default_rng(7))
    b = sample_bias(nominal.allocation, 10.0, np.random.default_rng(7))
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_sample_bias_bounds(small_instance):
    nominal = solve_milp(small_instance)
    x_bias, y_bias = sample_bias(nominal.allocation, 10.0, np.random.default_rng(3))
    assert np.all(np.abs(x_bias - nominal.allocation.x) <= 10.0)
    assert np.all((y_bias >= 0.0) & (y_bias <= 1.0))


def test_sample_bias_rejects_nonpositive_width(small_instance):
    nominal = solve_milp(small_instance)
    with pytest.raises(ValueError):
        sample_bias(nominal.allocation, 0.0, np.random.default_rng(0))


def test_pool_nominal_only(small_instance):
    pool = generate_pool(small_instance, [0.0, 0.5], 1, seed=0)
    nominal = solve_milp(small_instance)
    assert len(pool) == 2
    for e in pool.entries:
        assert e.j_orig == pytest.approx(nominal.objective, rel=1e-9)


def test_pool_counts_and_feasibility(small_instance):
    pool = generate_pool(small_instance, uniform_contexts(3), 4, seed=1)
    assert len(pool) <= 12
    for e in pool.entries:
        assert check_feasible(e.allocation, small_instance) == []


def test_pool_nominal_entry_is_cheapest(small_instance):
    pool = generate_pool(small_instance, [0.0], 5, seed=2)
    by_ctx = pool.by_context()
    entries = by_ctx[0.0]
    nominal_j = entries[0].j_orig
    for e in entries[1:]:
        assert e.j_orig >= nominal_j - 1e-6 * (1 + abs(nominal_j))


def test_pool_seeds_differ(small_instance):
    a = generate_pool(small_instance, [0.0], 4, seed=1)
    b = generate_pool(small_instance, [0.0], 4, seed=2)
    ua = [flatten(e.allocation, small_instance) for e in a.entries]
    ub = [flatten(e.allocation, small_instance) for e in b.entries]
    assert any(not np.array_equal(x, y) for x, y in zip(ua, ub))


def test_pool_file_deterministic(tmp_path, small_instance):
    p1, p2 = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
    save_pool(generate_pool(small_instance, [0.0, 1.0], 3, seed=5), p1, small_instance)
    save_pool(generate_pool(small_instance, [0.0, 1.0], 3, seed=5), p2, small_instance)
    assert p1.read_bytes() == p2.read_bytes()


def test_pool_round_trip(tmp_path, small_instance):
    pool = generate_pool(small_instance, [0.0, 0.5], 3, seed=6)
    path = tmp_path / "pool.jsonl"
    save_pool(pool, path, small_instance)
    loaded = load_pool(path, small_instance)
    assert len(loaded) == len(pool)
    for a, b in zip(pool.entries, loaded.entries):
        assert a.context == b.context
        assert np.array_equal(a.allocation.x, b.allocation.x)
        assert a.j_orig == b.j_orig


def test_pool_load_rejects_wrong_objective(tmp_path, small_instance):
    pool = generate_pool(small_instance, [0.0], 2, seed=7)
    path = tmp_path / "pool.jsonl"
    save_pool(pool, path, small_instance)
    lines = path.read_text().splitlines()
    import json

    rec = json.loads(lines[0])
    rec["j_orig"] = rec["j_orig"] + 1000.0
    path.write_text("\n".join([json.dumps(rec)] + lines[1:]) + "\n")
    with pytest.raises(PoolError, match="j_orig"):
        load_pool(path, small_instance)


def test_pool_duplicate_handling(small_instance):
    # a vanishing perturbation makes every biased solve collapse to the nominal
    pool = generate_pool(small_instance, [0.0], 4, lam=1e-9, w=1e-9, seed=8, retry_budget=2)
    assert pool.duplicate_warnings > 0
    assert len(pool) < 4


def test_pool_validates_contexts(small_instance):
    with pytest.raises(ValueError):
        generate_pool(small_instance, [1.5], 2, seed=0)
    with pytest.raises(ValueError):
        generate_pool(small_instance, [0.5], 0, seed=0)
