import numpy as np
import pandas as pd
import pytest

from btboot.backtest import BacktestPlan
from btboot.bootstrap import BootstrapConfig
from btboot.exceptions import DataIOError, EmptyPlanError, ProvenanceMismatchError
from btboot.forecasters import ARForecaster, RidgeForecaster
from btboot.pipeline import BUNDLE_FILES, BacktestBootstrapForecaster, TrainedDFModel, forecast, quantile_frame, train
from helpers import make_panel


class CountingRidge(RidgeForecaster):
    fits = 0

    def fit(self, panel):
        type(self).fits += 1
        return super().fit(panel)


def fcov(panel, k, value=1.0):
    return {sid: np.full((k, 1), value) for sid in panel.ids}


@pytest.fixture
def model(linear_panel):
    return train(linear_panel, RidgeForecaster(), BacktestPlan(30, 1, 3), {"variant": "tree", "min_leaf": 10,
                                                                          "n_min": 10})


def test_bundle_round_trip(model, linear_panel, tmp_path):
    model.save(tmp_path / "b")
    assert sorted(p.name for p in (tmp_path / "b").iterdir()) == sorted(BUNDLE_FILES)
    again = TrainedDFModel.load(tmp_path / "b")
    assert again.equals(model)
    a = forecast(model, fcov(linear_panel, 3), 3)
    b = forecast(again, fcov(linear_panel, 3), 3)
    assert all(x.same_as(y) for x, y in zip(a, b))


def test_missing_bundle_file(model, tmp_path):
    model.save(tmp_path / "b")
    (tmp_path / "b" / "selector.json").unlink()
    with pytest.raises(DataIOError):
        TrainedDFModel.load(tmp_path / "b")


def test_mismatched_provenance(model, linear_panel):
    other = linear_panel.replace_series(s for s in linear_panel if s.id == linear_panel.ids[0])
    with pytest.raises(ProvenanceMismatchError):
        TrainedDFModel(model.forecaster, model.collection, model.selector, model.bootstrap, model.plan, other)


def test_identity_select_returns_everything(linear_panel):
    m = train(linear_panel, RidgeForecaster(), BacktestPlan(30, 1, 2))
    assert m.select({"horizon": 1}).equals(m.collection)


def test_zero_splits_reports_stage(linear_panel):
    with pytest.raises(EmptyPlanError) as info:
        train(linear_panel, RidgeForecaster(), BacktestPlan(10_000, 1, 1))
    assert info.value.stage == "backtest" and "[backtest]" in str(info.value)


def test_horizon_beyond_backtest_falls_back(linear_panel):
    m = train(linear_panel, RidgeForecaster(), BacktestPlan(30, 1, 2),
              {"variant": "rules", "rules": ["horizon <= 1"], "n_min": 5})
    out = forecast(m, fcov(linear_panel, 5), 5)
    assert len(out) == 2 * 5
    assert all(np.isfinite(d.samples).all() for d in out)


def test_forecast_never_fits(linear_panel):
    m = train(linear_panel, CountingRidge(), BacktestPlan(50, 1, 2))
    before = CountingRidge.fits
    forecast(m, fcov(linear_panel, 2), 2)
    forecast(m, fcov(linear_panel, 2), 2, BootstrapConfig(formula="multiplicative", B=10))
    assert CountingRidge.fits == before


def test_repeated_forecast_identical(model, linear_panel):
    a = forecast(model, fcov(linear_panel, 2), 2)
    b = forecast(model, fcov(linear_panel, 2), 2)
    assert all(x.same_as(y) for x, y in zip(a, b))


def test_quantile_frame_monotone(model, linear_panel):
    df = quantile_frame(forecast(model, fcov(linear_panel, 3), 3), [0.9, 0.1, 0.5])
    assert list(df.columns) == ["series_id", "time", "point_forecast", "q_0.1", "q_0.5", "q_0.9"]
    q = df[["q_0.1", "q_0.5", "q_0.9"]].to_numpy()
    assert np.all(np.diff(q, axis=1) >= 0)


def test_iterative_bundle(tmp_path):
    y = np.cumsum(np.random.default_rng(0).normal(size=60))
    panel = make_panel({"a": y})
    m = train(panel, ARForecaster(order=2), BacktestPlan(30, 1, 1))
    m.save(tmp_path / "b")
    again = TrainedDFModel.load(tmp_path / "b")
    assert all(x.same_as(y) for x, y in zip(forecast(m, None, 3), forecast(again, None, 3)))


class TestEstimator:
    def test_fit_predict(self, linear_panel):
        est = BacktestBootstrapForecaster(RidgeForecaster(), max_horizon=2, B=200)
        est.fit(linear_panel)
        q = est.predict_quantiles([0.1, 0.9], 2, fcov(linear_panel, 2))
        assert len(q) == 4 and np.all(q["q_0.1"] <= q["q_0.9"])
        p = est.predict(2, fcov(linear_panel, 2))
        assert list(p.columns) == ["series_id", "time", "point_forecast"]

    def test_params(self):
        est = BacktestBootstrapForecaster(RidgeForecaster(), B=5)
        assert est.get_params()["B"] == 5
        est.set_params(formula="multiplicative")
        assert est.formula == "multiplicative"

    def test_unfitted(self):
        from sklearn.exceptions import NotFittedError
        with pytest.raises(NotFittedError):
            BacktestBootstrapForecaster(RidgeForecaster()).predict()
