import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from btboot.backtest import (
    BacktestPlan, CovariatePerturbation, ResidualCollection, merge_collections, perturb_covariates,
    run_backtest,
)
from btboot._random import rng_for
from btboot.dataset import split_at
from btboot.exceptions import EmptyPlanError, LookupKeyError, ProvenanceMismatchError
from btboot.forecasters import ARForecaster, PointForecaster, RidgeForecaster
from helpers import make_panel
from oracles import enumerate_residual_pairs


class PeekingForecaster(PointForecaster):
    """Returns the true future values; only useful to test the harness."""

    kind = "direct"

    def __init__(self, truth=None):
        self.truth = truth

    def fit(self, panel):
        self.fitted_ = True
        return self

    def predict(self, request):
        s = self.truth[request.history.id]
        a = request.origin + 1 - s.start
        return s.y[a:a + request.horizon].copy()


def panel_1_10():
    return make_panel({"s": np.arange(1.0, 11.0)}, starts={"s": 1})


def test_split_enumeration_example():
    coll = run_backtest(panel_1_10(), ARForecaster(order=1), BacktestPlan(5, 2, 2))
    assert len(coll) == 5
    assert sorted(set(coll.j.tolist())) == [5, 7, 9]
    assert sorted(zip(coll.j.tolist(), coll.t.tolist())) == [(5, 6), (5, 7), (7, 8), (7, 9), (9, 10)]


@given(a=st.integers(2, 12), step=st.integers(1, 4), H=st.integers(1, 4), late=st.integers(0, 6))
def test_record_set_matches_enumeration(a, step, H, late):
    p = make_panel({"x": np.arange(14.0), "y": np.arange(9.0) * 2.0}, starts={"y": late})
    coll = run_backtest(p, ARForecaster(order=1), BacktestPlan(a, step, H))
    expect = [r for r in enumerate_residual_pairs({s.id: (s.start, s.end) for s in p}, a, step, H)
              # AR(1) needs two training points
              if (r[1] - p[r[0]].start + 1) >= 2]
    got = sorted(zip(coll.series_id.tolist(), coll.j.tolist(), coll.t.tolist()))
    assert got == sorted(expect)
    splits = BacktestPlan(a, step, H).split_points(p)
    assert len(splits) == (p.max_end - 1 - a) // step + 1


def test_perfect_forecaster_zero_residuals():
    p = panel_1_10()
    coll = run_backtest(p, PeekingForecaster(p), BacktestPlan(3, 1, 3))
    assert len(coll) > 0 and np.all(coll.eps == 0)


def test_residual_identity_and_horizon(linear_panel):
    coll = run_backtest(linear_panel, RidgeForecaster(), BacktestPlan(30, 3, 4))
    np.testing.assert_array_equal(coll.eps, coll.observed - coll.forecast)
    np.testing.assert_array_equal(coll.h, coll.t - coll.j)
    assert coll.h.min() >= 1 and coll.h.max() <= 4


def test_no_valid_split():
    with pytest.raises(EmptyPlanError):
        run_backtest(panel_1_10(), ARForecaster(), BacktestPlan(10, 1, 1))
    with pytest.raises(EmptyPlanError):
        BacktestPlan(0, 1, 1).split_points(panel_1_10())


def test_all_fits_failing_raises():
    with pytest.raises(EmptyPlanError):
        run_backtest(panel_1_10(), ARForecaster(order=20), BacktestPlan(5, 1, 1))


def test_failed_split_is_warned_not_fatal():
    # AR(3) cannot fit until it has four points
    coll = run_backtest(panel_1_10(), ARForecaster(order=3), BacktestPlan(2, 1, 1))
    assert coll.j.min() >= 4
    assert coll.provenance["warnings"]


class TestPerturbation:
    def covpanel(self):
        rng = np.random.default_rng(5)
        X = rng.normal(size=(40, 2))
        return make_panel({"a": (X @ [1.0, -1.0] + rng.normal(size=40), X)}, ("price", "temp"))

    def test_none_is_identity(self):
        x = np.array([1.0, 2.0])
        out = perturb_covariates(x, CovariatePerturbation(), rng_for(0), ("price", "temp"))
        np.testing.assert_array_equal(out, x)

    def test_zero_scale_matches_none(self):
        p = self.covpanel()
        plain = run_backtest(p, RidgeForecaster(), BacktestPlan(20, 1, 3), seed=3)
        pert = CovariatePerturbation("gaussian_noise", {"price": 0.0})
        noisy = run_backtest(p, RidgeForecaster(), BacktestPlan(20, 1, 3, pert), seed=3)
        np.testing.assert_array_equal(plain.eps, noisy.eps)

    def test_noise_reproducible(self):
        pert = CovariatePerturbation("gaussian_noise", {"price": 1.0})
        x = np.array([[1.0, 2.0], [3.0, 4.0]])
        a = perturb_covariates(x, pert, rng_for(9, "backtest", 4), ("price", "temp"))
        b = perturb_covariates(x, pert, rng_for(9, "backtest", 4), ("price", "temp"))
        np.testing.assert_array_equal(a, b)
        assert not np.array_equal(a[:, 0], x[:, 0])
        np.testing.assert_array_equal(a[:, 1], x[:, 1])

    def test_historic_file_lookup(self):
        pert = CovariatePerturbation("historic_estimate_file", target_covariates=("price",),
                                     estimates={("a", 5, "price"): 42.0})
        out = perturb_covariates(np.array([[1.0, 2.0]]), pert, rng_for(0), ("price", "temp"), "a", [5])
        assert out[0, 0] == 42.0 and out[0, 1] == 2.0
        with pytest.raises(LookupKeyError):
            perturb_covariates(np.array([[1.0, 2.0]]), pert, rng_for(0), ("price", "temp"), "a", [6])


class TestMerge:
    def test_disjoint_ranges_equal_single_run(self):
        p = panel_1_10()
        whole = run_backtest(p, ARForecaster(), BacktestPlan(5, 2, 2))
        first = run_backtest(make_panel({"s": np.arange(1.0, 7.0)}, starts={"s": 1}).replace_series(
            [p["s"]]), ARForecaster(), BacktestPlan(5, 2, 2))
        assert first.equals(whole)

    def test_worker_chunks_equal_sequential(self, linear_panel):
        one = run_backtest(linear_panel, RidgeForecaster(), BacktestPlan(20, 1, 3), seed=1, workers=1)
        many = run_backtest(linear_panel, RidgeForecaster(), BacktestPlan(20, 1, 3), seed=1, workers=3)
        assert one.equals(many)
        assert one.provenance == many.provenance

    def test_merge_of_one_is_identity(self, linear_panel):
        coll = run_backtest(linear_panel, RidgeForecaster(), BacktestPlan(40, 2, 2))
        assert merge_collections([coll]).equals(coll)

    def test_mismatch(self, linear_panel):
        a = run_backtest(linear_panel, RidgeForecaster(alpha=1.0), BacktestPlan(40, 2, 2))
        b = run_backtest(linear_panel, RidgeForecaster(alpha=2.0), BacktestPlan(40, 2, 2))
        with pytest.raises(ProvenanceMismatchError):
            merge_collections([a, b])


def test_leakage_free(linear_panel):
    plan = BacktestPlan(20, 1, 2)
    j_last = 35
    ref = run_backtest(split_at(linear_panel, j_last)[0], RidgeForecaster(), plan)
    bumped = linear_panel.replace_series(
        s.__class__(s.id, s.start, np.where(s.times > j_last, s.y + 1000.0, s.y), s.X) for s in linear_panel)
    again = run_backtest(split_at(bumped, j_last)[0], RidgeForecaster(), plan)
    assert ref.equals(again)


def test_csv_round_trip(tmp_path, linear_panel):
    coll = run_backtest(linear_panel, RidgeForecaster(), BacktestPlan(30, 2, 3, meta_covariates=("x",)))
    path = tmp_path / "residuals.csv"
    coll.save(path)
    assert (tmp_path / "residuals.provenance.json").exists()
    back = ResidualCollection.load(path)
    assert back.equals(coll)
    assert back.provenance["data_fingerprint"] == linear_panel.fingerprint()
    assert "extra.x" in back.to_frame().columns
