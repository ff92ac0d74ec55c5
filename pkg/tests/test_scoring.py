import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fairtwin.instance import Allocation, generate_instance
from fairtwin.pool import generate_pool, uniform_contexts
from fairtwin.scoring import (
    CONTEXT_SHIFT,
    TIE,
    ContextMismatchError,
    ScoredSolution,
    extract_features,
    prefer,
    rosenbrock,
    score,
    score_solution,
)


def chained_reference(v):
    """Independent loop-wise evaluation of the four-term landscape."""
    total = 0.0
    for k in range(4):
        total += 100.0 * (v[k + 1] - v[k] ** 2) ** 2 + (1.0 - v[k]) ** 2
    return total


def test_rosenbrock_exact_values():
    assert rosenbrock([1, 1, 1, 1, 1]) == pytest.approx(0.0, abs=1e-12)
    assert rosenbrock([0, 0, 0, 0, 0]) == pytest.approx(4.0, abs=1e-12)
    assert rosenbrock([1, 1, 1, 1, 2]) == pytest.approx(100.0, abs=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=5, max_size=5))
def test_rosenbrock_matches_reference_and_nonnegative(v):
    val = rosenbrock(v)
    assert val == pytest.approx(chained_reference(v), rel=1e-12, abs=1e-12)
    assert val >= 0.0


def test_rosenbrock_zero_only_at_ones():
    grid = np.linspace(0, 1.5, 7)
    for v in itertools.product(grid, repeat=2):
        full = np.array([v[0], v[1], 1.0, 1.0, 1.0])
        if not np.allclose(full, 1.0):
            assert rosenbrock(full) > 0.0


def test_rosenbrock_rejects_wrong_length():
    with pytest.raises(ValueError):
        rosenbrock([1, 2, 3])


def test_extract_features_zero_allocation(small_instance):
    alloc = Allocation(
        x=np.zeros((small_instance.n_counties, small_instance.n_facilities)),
        y=np.zeros(small_instance.n_temporary, dtype=int),
    )
    assert np.array_equal(extract_features(alloc, small_instance), np.zeros(5))


def test_extract_features_single_county():
    from fairtwin.instance import Instance

    inst = Instance(
        county_ids=("c1",), facility_ids=("e1",), kinds=("existing",),
        demand={"c1": 10.0}, capacity={"e1": 10.0},
        distance_cost=np.array([[1.0]]), fixed_cost={},
    )
    alloc = Allocation(x=np.array([[10.0]]), y=np.zeros(0, dtype=int))
    f = extract_features(alloc, inst)
    assert f[0] == pytest.approx(1.0)
    assert f[4] == pytest.approx(1.0)


def test_feasible_allocations_fully_serve_demand(small_instance):
    pool = generate_pool(small_instance, [0.0], 4, seed=1)
    for e in pool.entries:
        f = extract_features(e.allocation, small_instance)
        assert f[4] == pytest.approx(1.0, abs=1e-9)


def test_score_zero_shift_equals_rosenbrock(small_instance):
    pool = generate_pool(small_instance, [0.0], 2, seed=2)
    alloc = pool.entries[0].allocation
    assert score(alloc, 0.0, small_instance) == pytest.approx(
        rosenbrock(extract_features(alloc, small_instance))
    )


def test_score_shift_cancellation():
    for x0 in (0.0, 0.3, 1.0):
        shifted = np.ones(5) + CONTEXT_SHIFT * x0
        assert rosenbrock(shifted - CONTEXT_SHIFT * x0) == pytest.approx(0.0, abs=1e-12)


def test_score_full_shift_derived_value():
    # all-zero features at full context: direct evaluation of the landscape
    v = np.zeros(5) - 0.1
    assert chained_reference(v) == pytest.approx(9.68, abs=1e-12)
    assert rosenbrock(v) == pytest.approx(9.68, abs=1e-12)


def test_score_rejects_out_of_range_context(small_instance):
    pool = generate_pool(small_instance, [0.0], 2, seed=2)
    with pytest.raises(ValueError):
        score(pool.entries[0].allocation, 1.5, small_instance)


def test_score_continuity_in_context(small_instance):
    pool = generate_pool(small_instance, [0.5], 2, seed=3)
    alloc = pool.entries[1].allocation
    eps = 1e-6
    delta = abs(score(alloc, 0.5, small_instance) - score(alloc, 0.5 + eps, small_instance))
    assert delta < 1e-3


def _scored(composite, ctx=0.5):
    return ScoredSolution(
        allocation=None, context=ctx, oracle_score=composite, j_orig=0.0, composite=composite
    )


def test_prefer_orders_by_composite():
    a, b = _scored(1.0), _scored(2.0)
    assert prefer(a, b) == (a, b)
    assert prefer(b, a) == (a, b)


def test_prefer_tie():
    a, b = _scored(1.0), _scored(1.0 + 1e-12)
    assert prefer(a, b) is TIE


def test_prefer_context_mismatch():
    with pytest.raises(ContextMismatchError):
        prefer(_scored(1.0, ctx=0.1), _scored(2.0, ctx=0.2))


def test_prefer_strict_weak_order():
    rng = np.random.default_rng(0)
    solutions = [_scored(float(v)) for v in rng.uniform(0, 10, 10)]
    for a, b in itertools.combinations(solutions, 2):
        fwd = prefer(a, b)
        assert fwd == prefer(b, a)  # order of arguments is irrelevant
    for a, b, c in itertools.permutations(solutions, 3):
        if prefer(a, b) == (a, b) and prefer(b, c) == (b, c):
            assert prefer(a, c) == (a, c)  # transitivity on non-ties


def test_score_solution_composite_identity(small_instance):
    pool = generate_pool(small_instance, [0.25], 3, seed=4)
    for e in pool.entries:
        s = score_solution(e.allocation, e.context, small_instance, j_orig=e.j_orig)
        assert s.composite == s.oracle_score + s.j_orig
    weighted = score_solution(pool.entries[0].allocation, 0.25, small_instance, j_weight=5.0)
    assert weighted.composite == pytest.approx(weighted.oracle_score + 5.0 * weighted.j_orig)
