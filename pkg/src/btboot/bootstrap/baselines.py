"""Classic bootstrap baselines: fitted residuals (FR) and fitted models (FM)."""

from __future__ import annotations

import logging
from dataclasses import replace

import numpy as np
from scipy import linalg
from sklearn.base import clone

from .._random import rng_for
from ..backtest import ResidualCollection
from ..dataset import Panel, Series
from ..exceptions import BtbootError, InsufficientDataError, NumericalError
from ..forecasters import ForecastRequest, PointForecaster, describe
from ..selector.selectors import IdentitySelector
from .core import BootstrapConfig, draw_indices
from .forecast import DistributionForecast, _future_block, _horizon_map, forecast_distribution

logger = logging.getLogger(__name__)


def in_sample_collection(fitted: PointForecaster, panel: Panel) -> ResidualCollection:
    """Fitted (in-sample, one-step) residuals packaged as a residual collection."""
    fv = fitted.fitted_values(panel)
    cols = {k: [] for k in ("eps", "series_id", "j", "t", "h", "forecast", "observed")}
    for s in sorted(panel, key=lambda s: s.id):
        f = np.asarray(fv[s.id], dtype=float)
        ok = np.isfinite(f)
        t = s.times[ok]
        cols["eps"].append(s.y[ok] - f[ok])
        cols["series_id"].append(np.full(ok.sum(), s.id, dtype=object))
        cols["j"].append(t - 1)
        cols["t"].append(t)
        cols["h"].append(np.ones(ok.sum(), dtype=np.int64))
        cols["forecast"].append(f[ok])
        cols["observed"].append(s.y[ok])
    cat = {k: np.concatenate(v) if v else np.zeros(0) for k, v in cols.items()}
    if len(cat["eps"]) == 0:
        raise InsufficientDataError("model produced no in-sample fitted values")
    return ResidualCollection(
        **cat,
        provenance={"kind": "fitted_residuals", "model": describe(fitted),
                    "data_fingerprint": panel.fingerprint()},
    )


def baseline_fr(forecaster: PointForecaster, panel: Panel, cfg: BootstrapConfig, horizons,
                future_covariates=None, fitted: PointForecaster | None = None) -> list:
    """Bootstrap with fitted residuals.

    The model is fitted once on the whole panel and its in-sample residuals
    are resampled additively around the point forecast. This is the
    backtest-additive path fed with in-sample residuals and no selection.
    """
    fitted = fitted if fitted is not None else clone(forecaster).fit(panel)
    coll = in_sample_collection(fitted, panel)
    sel = IdentitySelector().fit(coll)
    return forecast_distribution(fitted, panel, sel, coll, replace(cfg, formula="additive"),
                                 horizons, future_covariates)


def _bootstrap_panel(panel, fitted_values, pool, rng):
    series = []
    for s in panel:
        f = np.asarray(fitted_values[s.id], dtype=float)
        ok = np.isfinite(f)
        y = s.y.copy()
        y[ok] = f[ok] + pool[draw_indices(len(pool), rng.random(ok.sum()))]
        series.append(Series(s.id, s.start, y, s.X))
    return panel.replace_series(series)


def baseline_fm(forecaster: PointForecaster, panel: Panel, cfg: BootstrapConfig, horizons,
                n_refits: int = 200, future_covariates=None,
                fitted: PointForecaster | None = None) -> list:
    """Bootstrap with fitted models.

    Each of ``n_refits`` replicates rebuilds the panel as fitted values plus
    resampled fitted residuals, refits the model, forecasts the future point
    and adds one more resampled residual. Replicates whose refit fails are
    dropped; the result carries one sample per surviving replicate.
    """
    if n_refits < 1:
        raise ValueError("n_refits must be >= 1")
    hmap = _horizon_map(panel, horizons)
    fitted = fitted if fitted is not None else clone(forecaster).fit(panel)
    fv = fitted.fitted_values(panel)
    pool = in_sample_collection(fitted, panel).eps

    def forecasts(model):
        out = {}
        for s in panel:
            if s.id in hmap:
                k = hmap[s.id]
                fc = _future_block(panel, s.id, k, future_covariates)
                out[s.id] = np.asarray(model.predict(ForecastRequest(s, fc, k)), dtype=float)
        return out

    base = forecasts(fitted)
    samples = {sid: [] for sid in base}
    failures = 0
    for m in range(n_refits):
        rng = rng_for(cfg.seed, "fm", m)
        boot = _bootstrap_panel(panel, fv, pool, rng)
        try:
            refit = clone(forecaster).fit(boot)
            pf = forecasts(refit)
        except (BtbootError, ValueError, ArithmeticError, linalg.LinAlgError) as exc:
            failures += 1
            logger.warning("FM refit %d dropped: %s", m, exc)
            continue
        for sid in sorted(pf):
            noise = pool[draw_indices(len(pool), rng.random(len(pf[sid])))]
            samples[sid].append(pf[sid] + noise)
    if failures == n_refits:
        raise NumericalError("every FM refit failed")

    out = []
    for s in panel:
        if s.id not in base:
            continue
        block = np.vstack(samples[s.id])
        for h in range(1, hmap[s.id] + 1):
            out.append(DistributionForecast(s.id, s.end + h, h, s.end, float(base[s.id][h - 1]),
                                            block[:, h - 1]))
    return out
