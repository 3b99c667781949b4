import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from btboot.exceptions import InsufficientDataError
from btboot.selector.tree import RegressionTree, best_split
from oracles import exhaustive_best_split


def horizon_step_data():
    h = np.repeat(np.arange(1, 11), 6).astype(float)
    return h[:, None], np.where(h > 5, 10.0, -10.0)


def test_constant_target_single_leaf():
    X = np.arange(40.0)[:, None]
    t = RegressionTree(max_depth=3, min_leaf=5).fit(X, np.ones(40))
    assert t.root_.is_leaf and len(t.leaves_) == 1


def test_horizon_step_split():
    X, y = horizon_step_data()
    t = RegressionTree(max_depth=1, min_leaf=5).fit(X, y)
    assert t.root_.feature == 0 and 5 < t.root_.threshold <= 6
    leaf = t.apply(np.array([[8.0]]))[0]
    members = t.leaves_[leaf].indices
    assert np.all(y[members] == 10.0) and len(members) == 30


def test_min_leaf_over_half_forces_single_leaf():
    X, y = horizon_step_data()
    t = RegressionTree(max_depth=3, min_leaf=len(y) // 2 + 1).fit(X, y)
    assert len(t.leaves_) == 1


def test_too_few_records():
    with pytest.raises(InsufficientDataError):
        RegressionTree(min_leaf=10).fit(np.zeros((5, 1)), np.zeros(5))


@given(st.integers(0, 10_000), st.integers(1, 6))
def test_best_split_matches_exhaustive(seed, min_leaf):
    rng = np.random.default_rng(seed)
    X = rng.integers(0, 6, size=(25, 2)).astype(float)
    y = rng.normal(size=25) + 3 * (X[:, 1] > 2)
    got = best_split(X, y, min_leaf)
    want = exhaustive_best_split(X, y, min_leaf)
    if want is None:
        assert got is None
    else:
        assert got[1:] == want[1:] and got[0] == pytest.approx(want[0])


def test_tie_goes_to_lower_feature():
    X = np.column_stack([np.arange(10.0), np.arange(10.0)])
    y = (np.arange(10) >= 5).astype(float)
    assert best_split(X, y, 1)[1] == 0


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=20))
def test_routing_is_total(values):
    rng = np.random.default_rng(0)
    X = rng.normal(size=(80, 1))
    t = RegressionTree(max_depth=3, min_leaf=5).fit(X, X[:, 0] ** 2)
    leaves = t.apply(np.asarray(values)[:, None])
    assert np.all((leaves >= 0) & (leaves < len(t.leaves_)))
    assert sum(len(l.indices) for l in t.leaves_) == 80
    assert min(len(l.indices) for l in t.leaves_) >= 5


def test_structure_round_trip():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(100, 2))
    y = X[:, 0] + (X[:, 1] > 0)
    t = RegressionTree(max_depth=3, min_leaf=8).fit(X, y)
    u = RegressionTree.from_structure(t.structure(), X, y, 3, 8)
    np.testing.assert_array_equal(t.apply(X), u.apply(X))
