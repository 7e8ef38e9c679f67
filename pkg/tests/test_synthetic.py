import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from nestkit.metrics import nodf_matrix
from nestkit.synthetic import (growth_series, nested_growth, noisy_nested, planted_blocks, random_nested,
                               staircase, staircase_frontier)


def test_staircase_shape():
    assert staircase(3).tolist() == [[1, 1, 1], [1, 1, 0], [1, 0, 0]]
    assert staircase(2, 4, threshold=3).tolist() == [[1, 1, 1, 1], [1, 1, 1, 0]]


@given(st.integers(1, 8), st.integers(1, 8), st.integers(0, 1000), st.booleans())
def test_random_nested_is_nested(nr, nc, seed, shuffle):
    a = random_nested(nr, nc, np.random.default_rng(seed), shuffle=shuffle)
    rows = [set(np.flatnonzero(r)) for r in a]
    assert all(s <= t or t <= s for s in rows for t in rows)
    assert a.any(axis=1).all() and a.any(axis=0).all()


def test_random_nested_distinct_degrees():
    a = random_nested(6, 9, np.random.default_rng(0), distinct=True)
    assert len(set(a.sum(axis=1))) == 6
    with pytest.raises(ValueError):
        random_nested(5, 3, np.random.default_rng(0), distinct=True)


def test_planted_blocks():
    a = planted_blocks(3)
    assert a.shape == (6, 6) and a.sum() == 2 * 6 + 1 and a[0, 3] == 1
    assert planted_blocks(3, bridge=False).sum() == 12


def test_noisy_nested_no_empty_lines():
    for seed in range(20):
        a = noisy_nested(8, 0.4, np.random.default_rng(seed))
        assert a.any(axis=1).all() and a.any(axis=0).all()
    assert np.array_equal(noisy_nested(5, 0.0, np.random.default_rng(0)), staircase(5))


def test_frontier_of_staircase():
    assert staircase_frontier(staircase(3)) == [(1, 2), (2, 1)]
    assert staircase_frontier(staircase(3, 4)) == [(0, 3), (1, 2), (2, 1)]
    assert staircase_frontier(np.ones((2, 2), dtype=int)) == []
    a = staircase(4)
    a[1, 1] = 0
    assert (1, 1) in staircase_frontier(a)


def test_nested_growth_monotone_and_holes_fill():
    mats = nested_growth(seed=0)
    assert len(mats) == 11
    for a, b in zip(mats, mats[1:]):
        assert np.all(b >= a) and b.sum() > a.sum()
    base = staircase(20, 25, 24)
    assert np.all(mats[5][base == 1] == 1)
    assert nodf_matrix(mats[0])[0] < nodf_matrix(mats[5])[0]


def test_growth_series_is_reproducible_and_monthly():
    s = growth_series(seed=3)
    assert s == growth_series(seed=3)
    assert s != growth_series(seed=4)
    assert [d.month for d in s.dates] == list(range(1, 12))
    assert s.restriction_id == "synthetic_growth"
