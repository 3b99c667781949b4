"""Distribution forecasts for direct and iterative point-forecast models."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from .._random import rng_for
from ..backtest import ResidualCollection
from ..dataset import Panel
from ..exceptions import ConfigError, DataError, NumericalError
from ..forecasters import ForecastRequest, PointForecaster
from ..selector.selectors import BaseSelector
from .core import BootstrapConfig, build_ratio_set, default_delta, draw_indices, quantile


@dataclass(frozen=True, eq=False)
class DistributionForecast:
    """Bootstrap forecast distribution for one series at one future time."""

    series_id: str
    time: int
    horizon: int
    origin: int
    point_forecast: float
    samples: np.ndarray
    selector_fallback: bool = False
    excluded_ratio_count: int = 0
    nonpositive_pf: bool = False

    def __post_init__(self):
        s = np.array(self.samples, dtype=float)
        s.sort()
        s.setflags(write=False)
        object.__setattr__(self, "samples", s)

    @property
    def B(self):
        return len(self.samples)

    def quantile(self, tau):
        return quantile(self.samples, tau)

    def bagging(self, stat: str = "median") -> float:
        return bagging_pf(self, stat)

    def same_as(self, other: "DistributionForecast") -> bool:
        return (
            (self.series_id, self.time, self.horizon, self.origin, self.selector_fallback,
             self.excluded_ratio_count, self.nonpositive_pf)
            == (other.series_id, other.time, other.horizon, other.origin, other.selector_fallback,
                other.excluded_ratio_count, other.nonpositive_pf)
            and self.point_forecast == other.point_forecast
            and np.array_equal(self.samples, other.samples)
        )


def bagging_pf(df: DistributionForecast, stat: str = "median") -> float:
    """Median or mean of the bootstrap forecasts."""
    if len(df.samples) == 0:
        raise NumericalError("empty distribution forecast")
    if stat == "median":
        return quantile(df.samples, 0.5)
    if stat == "mean":
        return float(np.mean(df.samples))
    raise ConfigError(f"bagging statistic must be 'median' or 'mean', got {stat!r}")


class ResamplingPools:
    """Per-cell arrays to resample from (residuals or error ratios).

    Built lazily from a fitted selector and cached by cell key.
    """

    def __init__(self, selector: BaseSelector, coll: ResidualCollection, cfg: BootstrapConfig):
        if len(coll) == 0:
            raise NumericalError("residual collection is empty")
        self.selector = selector
        self.coll = coll
        self.cfg = cfg
        self.delta = None
        if cfg.formula == "multiplicative":
            self.delta = cfg.delta if cfg.delta is not None else default_delta(coll, cfg.ratio_denominator)
        self._cache = {}

    def get(self, key):
        """``(values, fallback, excluded)`` for cell ``key``."""
        hit = self._cache.get(key)
        if hit is None:
            sel = self.selector.members(key)
            if self.cfg.formula == "additive":
                values, excluded = self.coll.eps[sel.indices], 0
            else:
                rs = build_ratio_set(self.coll.take(sel.indices), self.cfg, self.delta)
                values, excluded = rs.ratios, rs.excluded
            hit = (values, sel.fallback, excluded)
            self._cache[key] = hit
        return hit


def _apply(formula, pf, draws):
    return pf + draws if formula == "additive" else pf * (1.0 + draws)


def _horizon_map(panel: Panel, horizons) -> dict:
    if isinstance(horizons, Mapping):
        unknown = set(horizons) - set(panel.ids)
        if unknown:
            raise DataError(f"horizons requested for unknown series {sorted(unknown)}")
        out = {sid: int(k) for sid, k in horizons.items()}
    else:
        out = {sid: int(horizons) for sid in panel.ids}
    if any(k < 1 for k in out.values()):
        raise ConfigError("forecast horizons must be >= 1")
    return out


def _future_block(panel, sid, k, future_covariates):
    p = len(panel.covariate_names)
    if future_covariates is None or sid not in future_covariates:
        if p:
            raise DataError(f"future covariates missing for series {sid!r}")
        return np.zeros((k, 0))
    fc = np.asarray(future_covariates[sid], dtype=float)
    if fc.ndim == 1:
        fc = fc.reshape(-1, p) if p else fc.reshape(-1, 0)
    if fc.shape[0] < k or fc.shape[1] != p:
        raise DataError(
            f"series {sid!r}: need future covariates of shape ({k}, {p}), got {fc.shape}"
        )
    return fc[:k]


def _extra_features(selector, panel, fc_rows):
    out = {}
    for f in selector.feature_names():
        if f.startswith("extra."):
            out[f] = fc_rows[:, panel.covariate_index(f[6:])]
    return out


def forecast_direct(forecaster: PointForecaster, panel: Panel, selector: BaseSelector,
                    coll: ResidualCollection, cfg: BootstrapConfig, horizons,
                    future_covariates: Mapping | None = None) -> list:
    """Distribution forecasts for a direct model.

    For each series the point forecast at horizon ``k`` is computed once; the
    selector receives the future point's horizon, forecast, target time and
    any ``extra.*`` covariates, and the configured formula is applied to
    ``B`` resampled residuals (or ratios) of the selected cell.
    """
    hmap = _horizon_map(panel, horizons)
    pools = ResamplingPools(selector, coll, cfg)
    rows = []
    for s in panel:
        if s.id not in hmap:
            continue
        k = hmap[s.id]
        fc = _future_block(panel, s.id, k, future_covariates)
        pf = np.asarray(forecaster.predict(ForecastRequest(s, fc, k)), dtype=float)
        rows.append((s, k, fc, pf))
    if not rows:
        return []

    feats = {
        "horizon": np.concatenate([np.arange(1, k + 1) for _, k, _, _ in rows]).astype(float),
        "forecast": np.concatenate([pf for *_, pf in rows]),
        "target_time": np.concatenate([s.end + np.arange(1, k + 1) for s, k, _, _ in rows]).astype(float),
        "split_point": np.concatenate([np.full(k, s.end) for s, k, _, _ in rows]).astype(float),
    }
    extra = _extra_features(selector, panel, np.concatenate([fc for _, _, fc, _ in rows]))
    feats.update(extra)
    keys = selector.cell_keys(feats)

    out = []
    pos = 0
    B = int(cfg.B)
    for s, k, _, pf in rows:
        for h in range(1, k + 1):
            t = s.end + h
            values, fallback, excluded = pools.get(int(keys[pos]))
            u = rng_for(cfg.seed, "df", s.id, s.end, t).random(B)
            samples = _apply(cfg.formula, pf[h - 1], values[draw_indices(len(values), u)])
            out.append(DistributionForecast(
                s.id, t, h, s.end, float(pf[h - 1]), samples, bool(fallback), int(excluded),
                cfg.formula == "multiplicative" and pf[h - 1] <= 0,
            ))
            pos += 1
    return out


def _history_window(forecaster):
    """Number of trailing values the one-step map reads, or None for all."""
    order = getattr(forecaster, "order", None)
    if order is None and hasattr(forecaster, "base"):
        order = getattr(forecaster.base, "order", None)
    return None if order is None else int(order)


def forecast_iterative(forecaster: PointForecaster, panel: Panel, selector: BaseSelector,
                       coll: ResidualCollection, cfg: BootstrapConfig, horizons,
                       future_covariates: Mapping | None = None) -> list:
    """Distribution forecasts for an iterative model by simulating trajectories.

    Each of the ``B`` trajectories starts from the observed history. At every
    step the model's one-step forecast is computed from the trajectory's own
    past, residuals are selected for that step (horizon 1 relative to the
    trajectory, the trajectory's current forecast, the target time) and one
    draw extends the trajectory. Every intermediate step is emitted.
    """
    if not hasattr(forecaster, "predict_next"):
        raise ConfigError(f"{type(forecaster).__name__} has no one-step map for iterative bootstrap")
    hmap = _horizon_map(panel, horizons)
    pools = ResamplingPools(selector, coll, cfg)
    B = int(cfg.B)
    out = []
    for s in panel:
        if s.id not in hmap:
            continue
        k = hmap[s.id]
        fc = _future_block(panel, s.id, k, future_covariates)
        det = np.asarray(forecaster.predict(ForecastRequest(s, fc, k)), dtype=float)
        w = _history_window(forecaster)
        paths = np.tile(s.y if w is None else s.y[max(len(s) - w, 0):], (B, 1))
        for h in range(1, k + 1):
            t = s.end + h
            pf = np.asarray(forecaster.predict_next(paths, fc[h - 1]), dtype=float)
            feats = {
                "horizon": np.ones(B),
                "forecast": pf,
                "target_time": np.full(B, float(t)),
                "split_point": np.full(B, float(t - 1)),
            }
            for name, col in _extra_features(selector, panel, fc[h - 1:h]).items():
                feats[name] = np.full(B, col[0])
            keys = selector.cell_keys(feats)
            u = rng_for(cfg.seed, "df", s.id, s.end, t).random(B)
            nxt = np.empty(B)
            fallback, excluded = False, 0
            for key in np.unique(keys):
                m = keys == key
                values, fb, ex = pools.get(int(key))
                fallback |= fb
                excluded += ex
                nxt[m] = _apply(cfg.formula, pf[m], values[draw_indices(len(values), u[m])])
            paths = np.column_stack([paths if w is None else paths[:, 1:], nxt])
            out.append(DistributionForecast(
                s.id, t, h, s.end, float(det[h - 1]), nxt, bool(fallback), int(excluded),
                cfg.formula == "multiplicative" and bool(np.any(pf <= 0)),
            ))
    return out


def forecast_distribution(forecaster, panel, selector, coll, cfg, horizons, future_covariates=None):
    """Dispatch on the forecaster's kind."""
    fn = forecast_iterative if forecaster.kind == "iterative" else forecast_direct
    return fn(forecaster, panel, selector, coll, cfg, horizons, future_covariates)
