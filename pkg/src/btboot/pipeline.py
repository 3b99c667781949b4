"""Training and forecasting facade plus an sklearn-style estimator wrapper.

Training runs the backtest, fits the residual selector and finally fits the
point forecaster on the whole training panel. Forecasting only evaluates the
fitted model and resamples stored residuals; it never fits anything.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from .backtest import BacktestPlan, CovariatePerturbation, ResidualCollection, _json_default, run_backtest
from .bootstrap.core import BootstrapConfig, check_tau
from .bootstrap.forecast import DistributionForecast, forecast_distribution
from .dataset import Panel, PanelSchema, TimeGrid, load_panel, save_panel
from .exceptions import BtbootError, DataIOError, ProvenanceMismatchError
from .forecasters import PointForecaster, describe, forecaster_from_dict, forecaster_to_dict
from .selector.selectors import BaseSelector, make_selector, selector_from_dict

BUNDLE_FILES = ("model.json", "residuals.csv", "selector.json", "config.json",
                "provenance.json", "history.csv")


@dataclass(frozen=True, eq=False)
class TrainedDFModel:
    """Everything needed to produce distribution forecasts without refitting."""

    forecaster: PointForecaster
    collection: ResidualCollection
    selector: BaseSelector
    bootstrap: BootstrapConfig
    plan: BacktestPlan
    history: Panel
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        fp = self.history.fingerprint()
        cfp = self.collection.provenance.get("data_fingerprint")
        if cfp is not None and cfp != fp:
            raise ProvenanceMismatchError(
                "residual collection was harvested from different data than the fitted model"
            )

    @property
    def kind(self):
        return self.forecaster.kind

    def select(self, future_meta) -> ResidualCollection:
        """Residual records the selector assigns to one future point."""
        return self.collection.take(self.selector.select(future_meta).indices)

    def config_dict(self) -> dict:
        return {
            "bootstrap": self.bootstrap.to_dict(),
            "backtest": self.plan.to_dict(),
            "selector": self.selector.to_dict(),
            "grid": {"freq": self.history.grid.freq, "origin": self.history.grid.origin},
            "covariates": list(self.history.covariate_names),
        }

    def save(self, path) -> None:
        """Write the bundle directory."""
        os.makedirs(path, exist_ok=True)
        dump = lambda name, obj: _write_json(os.path.join(path, name), obj)
        dump("model.json", forecaster_to_dict(self.forecaster))
        self.collection.save(os.path.join(path, "residuals.csv"), provenance_path="")
        dump("selector.json", self.selector.to_dict())
        dump("config.json", self.config_dict())
        dump("provenance.json", {**self.provenance, "residuals": self.collection.provenance})
        save_panel(self.history, os.path.join(path, "history.csv"))

    @classmethod
    def load(cls, path) -> "TrainedDFModel":
        missing = [f for f in BUNDLE_FILES if not os.path.exists(os.path.join(path, f))]
        if missing:
            raise DataIOError(f"model bundle {path!r} is missing {', '.join(missing)}")
        read = lambda name: _read_json(os.path.join(path, name))
        conf = read("config.json")
        prov = read("provenance.json")
        coll_prov = prov.pop("residuals", {})
        coll = ResidualCollection.load(os.path.join(path, "residuals.csv"), provenance_path="")
        coll = ResidualCollection.from_frame(coll.to_frame(), coll_prov)
        grid = conf.get("grid", {})
        schema = PanelSchema(freq=grid.get("freq", "int"), covariates=tuple(conf.get("covariates", ())))
        history = load_panel(os.path.join(path, "history.csv"), schema)
        if grid.get("origin") is not None:
            history = Panel(history.series, history.covariate_names, TimeGrid(grid["freq"], grid["origin"]))
        bt = conf["backtest"]
        # estimate tables are only needed while backtesting
        pert = bt.pop("perturbation")
        pert = CovariatePerturbation(pert["mode"], pert["noise_scale"], tuple(pert["target_covariates"]),
                                     {} if pert["mode"] == "historic_estimate_file" else None)
        plan = BacktestPlan(**{**bt, "perturbation": pert})
        return cls(
            forecaster_from_dict(read("model.json")),
            coll,
            selector_from_dict(read("selector.json"), coll),
            BootstrapConfig(**conf["bootstrap"]),
            plan,
            history,
            prov,
        )

    def equals(self, other: "TrainedDFModel") -> bool:
        return (
            forecaster_to_dict(self.forecaster) == forecaster_to_dict(other.forecaster)
            and self.collection.equals(other.collection)
            and self.selector.to_dict() == other.selector.to_dict()
            and self.bootstrap == other.bootstrap
            and _plan_key(self.plan) == _plan_key(other.plan)
            and self.history.equals(other.history)
        )


def _plan_key(plan):
    d = plan.to_dict()
    d["perturbation"].pop("estimates")
    return d


def _write_json(path, obj):
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)


def _read_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise DataIOError(f"cannot read {path}: {exc}") from exc


def _staged(stage, fn, *args, **kw):
    try:
        return fn(*args, **kw)
    except BtbootError as exc:
        raise exc.with_stage(stage)


def train(panel: Panel, forecaster: PointForecaster, plan: BacktestPlan, selector=None,
          cfg: BootstrapConfig = BootstrapConfig(), workers: int = 1,
          provenance: dict | None = None) -> TrainedDFModel:
    """Backtest, fit the selector, then fit the point forecaster on all of ``panel``.

    ``selector`` is an unfitted selector or a dict of
    :func:`~btboot.selector.make_selector` arguments. Errors carry the name
    of the stage that raised them.
    """
    coll = _staged("backtest", run_backtest, panel, forecaster, plan, seed=cfg.seed, workers=workers)
    if selector is None or isinstance(selector, dict):
        selector = _staged("selector", make_selector, **(selector or {}))
    sel = _staged("selector", clone(selector).fit, coll)
    fitted = _staged("fit", clone(forecaster).fit, panel)
    prov = {
        "data_fingerprint": panel.fingerprint(),
        "model": describe(forecaster),
        "n_residuals": len(coll),
        **(provenance or {}),
    }
    return TrainedDFModel(fitted, coll, sel, cfg, plan, panel, prov)


def forecast(model: TrainedDFModel, future_covariates=None, horizons=1,
             cfg: BootstrapConfig | None = None) -> list:
    """Distribution forecasts from a trained model; performs no fitting.

    ``cfg`` may replace the stored bootstrap settings (formula, B, seed, ...)
    since residuals and selector do not depend on them.
    """
    return _staged(
        "forecast", forecast_distribution, model.forecaster, model.history, model.selector,
        model.collection, cfg or model.bootstrap, horizons, future_covariates,
    )


def quantile_frame(dfs, taus, grid: TimeGrid | None = None) -> pd.DataFrame:
    """Quantile table with columns ``series_id, time, point_forecast, q_<tau>...`` in ascending tau."""
    taus = sorted({float(t) for t in np.atleast_1d(check_tau(taus))})
    rows = []
    for d in dfs:
        rows.append([d.series_id, d.time, d.point_forecast, *np.atleast_1d(d.quantile(taus))])
    df = pd.DataFrame(rows, columns=["series_id", "time", "point_forecast", *[f"q_{t:g}" for t in taus]])
    if grid is not None and not grid.is_integer and len(df):
        df["time"] = grid.to_timestamp(df["time"].to_numpy())
    return df


def samples_frame(dfs) -> pd.DataFrame:
    """Long table of raw bootstrap samples."""
    parts = [pd.DataFrame({"series_id": d.series_id, "time": d.time, "sample": np.arange(d.B),
                           "value": d.samples}) for d in dfs]
    return pd.concat(parts, ignore_index=True) if parts else pd.DataFrame(
        columns=["series_id", "time", "sample", "value"])


class BacktestBootstrapForecaster(BaseEstimator):
    """Estimator wrapper around :func:`train` and :func:`forecast`.

    Parameters
    ----------
    forecaster : PointForecaster
        Unfitted point forecaster.
    backtest_start : int, optional
        First backtest split point; defaults to the middle of the panel.
    step, max_horizon : int
        Backtest schedule.
    selector : dict, optional
        Selector configuration passed to :func:`~btboot.selector.make_selector`.
    formula, B, ratio_denominator, seed, delta
        Bootstrap settings.
    workers : int
        Parallel workers for the backtest.
    """

    def __init__(self, forecaster=None, backtest_start=None, step=1, max_horizon=1, selector=None,
                 formula="additive", B=1000, ratio_denominator="backtest_forecast", seed=0,
                 delta=None, workers=1):
        self.forecaster = forecaster
        self.backtest_start = backtest_start
        self.step = step
        self.max_horizon = max_horizon
        self.selector = selector
        self.formula = formula
        self.B = B
        self.ratio_denominator = ratio_denominator
        self.seed = seed
        self.delta = delta
        self.workers = workers

    def _cfg(self):
        return BootstrapConfig(self.formula, self.B, self.ratio_denominator, self.seed, self.delta)

    def fit(self, panel: Panel):
        if self.forecaster is None:
            raise ValueError("forecaster is required")
        start = self.backtest_start
        if start is None:
            start = panel.min_start + (panel.max_end - panel.min_start) // 2
        plan = BacktestPlan(start, self.step, self.max_horizon)
        self.model_ = train(panel, self.forecaster, plan, self.selector, self._cfg(), self.workers)
        return self

    def predict_distribution(self, horizons=1, future_covariates=None) -> list:
        check_is_fitted(self, "model_")
        return forecast(self.model_, future_covariates, horizons, replace(self.model_.bootstrap, **{
            "formula": self.formula, "B": self.B, "ratio_denominator": self.ratio_denominator,
            "seed": self.seed, "delta": self.delta}))

    def predict(self, horizons=1, future_covariates=None) -> pd.DataFrame:
        """Point forecasts as ``series_id, time, point_forecast``."""
        return quantile_frame(self.predict_distribution(horizons, future_covariates), [0.5])[
            ["series_id", "time", "point_forecast"]]

    def predict_quantiles(self, taus, horizons=1, future_covariates=None) -> pd.DataFrame:
        return quantile_frame(self.predict_distribution(horizons, future_covariates), taus)


__all__ = [
    "TrainedDFModel", "train", "forecast", "quantile_frame", "samples_frame",
    "BacktestBootstrapForecaster", "DistributionForecast", "BUNDLE_FILES",
]
