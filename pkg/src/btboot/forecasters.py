"""Point-forecast models behind one fit/predict contract.

A forecaster is fitted on a :class:`~btboot.dataset.Panel` and predicts a
vector of ``k`` values from a :class:`ForecastRequest`. ``kind`` tells the
bootstrap layer whether horizon ``k`` is produced directly from covariates
(``"direct"``) or by feeding earlier predictions back in (``"iterative"``).
Iterative models additionally expose :meth:`predict_next`, a batched
one-step map used to push many bootstrap trajectories at once.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np
import pandas as pd
from numpy.lib.stride_tricks import sliding_window_view
from scipy import linalg
from sklearn.base import BaseEstimator, clone
from sklearn.utils.validation import check_is_fitted

from .dataset import Panel, Series
from .exceptions import (
    ConfigError,
    DataError,
    DataIOError,
    InsufficientDataError,
    LookupKeyError,
    SingularMatrixError,
)


@dataclass(frozen=True, eq=False)
class ForecastRequest:
    """Inputs for one forecast made at the end of ``history``.

    ``future_covariates`` holds one row per future step ``1..horizon``.
    """

    history: Series
    future_covariates: np.ndarray
    horizon: int

    def __post_init__(self):
        if self.horizon < 1:
            raise ValueError("horizon must be a positive integer")
        if self.future_covariates is None:
            fc = np.zeros((self.horizon, self.history.X.shape[1]))
        else:
            fc = np.asarray(self.future_covariates, dtype=float)
            if fc.ndim == 1:
                fc = fc.reshape(-1, 1) if self.history.X.shape[1] == 1 else fc.reshape(1, -1)
        if fc.shape[0] != self.horizon:
            raise DataError(
                f"got {fc.shape[0]} future covariate rows for horizon {self.horizon}"
            )
        object.__setattr__(self, "future_covariates", fc)

    @property
    def origin(self) -> int:
        return self.history.end


class PointForecaster(BaseEstimator):
    """Base class. Subclasses implement ``fit``, ``predict`` and ``fitted_values``."""

    kind = "direct"

    @property
    def min_train_length(self) -> int:
        return 1

    def fit(self, panel: Panel):
        raise NotImplementedError

    def predict(self, request: ForecastRequest) -> np.ndarray:
        raise NotImplementedError

    def fitted_values(self, panel: Panel) -> dict:
        """In-sample one-step fitted values per series (NaN where undefined)."""
        raise NotImplementedError

    def _fitted_state(self) -> dict:
        return {}

    def _load_state(self, state: dict) -> None:
        pass


def _pooled_design(panel: Panel):
    X = np.concatenate([s.X for s in panel]) if len(panel) else np.zeros((0, len(panel.covariate_names)))
    y = np.concatenate([s.y for s in panel]) if len(panel) else np.zeros(0)
    return X, y


class RidgeForecaster(PointForecaster):
    """Pooled ridge regression on covariates with an unpenalised intercept.

    Every (series, time) observation is one row. The penalised normal
    equations on centred data are solved with a Cholesky factorisation.
    Predictions depend on future covariates only, never on the history.

    Parameters
    ----------
    alpha : float
        Non-negative L2 penalty on the weights.
    """

    kind = "direct"

    def __init__(self, alpha=1.0):
        self.alpha = alpha

    def fit(self, panel: Panel):
        if self.alpha < 0:
            raise ConfigError("ridge alpha must be non-negative")
        X, y = _pooled_design(panel)
        if len(y) == 0:
            raise InsufficientDataError("ridge fit needs at least one observation")
        x_mean = X.mean(axis=0)
        y_mean = y.mean()
        Xc = X - x_mean
        p = X.shape[1]
        if p == 0:
            self.coef_ = np.zeros(0)
        else:
            if self.alpha == 0 and np.linalg.matrix_rank(Xc) < p:
                raise SingularMatrixError(
                    "design matrix is rank deficient at alpha=0; use a positive ridge penalty"
                )
            A = Xc.T @ Xc + self.alpha * np.eye(p)
            try:
                factor = linalg.cho_factor(A, lower=True, check_finite=True)
            except linalg.LinAlgError as exc:
                raise SingularMatrixError(
                    f"normal equations are not positive definite ({exc}); increase alpha"
                ) from None
            self.coef_ = linalg.cho_solve(factor, Xc.T @ (y - y_mean))
        self.intercept_ = float(y_mean - x_mean @ self.coef_)
        self.n_features_in_ = p
        return self

    def predict(self, request: ForecastRequest) -> np.ndarray:
        check_is_fitted(self, "coef_")
        fc = request.future_covariates
        if fc.shape[1] != len(self.coef_):
            raise DataError(
                f"expected {len(self.coef_)} covariates, got {fc.shape[1]}"
            )
        return fc @ self.coef_ + self.intercept_

    def fitted_values(self, panel: Panel) -> dict:
        check_is_fitted(self, "coef_")
        return {s.id: s.X @ self.coef_ + self.intercept_ for s in panel}

    def objective(self, X, y, coef, intercept) -> float:
        r = y - X @ coef - intercept
        return float(r @ r + self.alpha * coef @ coef)

    def _fitted_state(self):
        return {"coef_": self.coef_.tolist(), "intercept_": self.intercept_}

    def _load_state(self, state):
        self.coef_ = np.asarray(state["coef_"], dtype=float)
        self.intercept_ = float(state["intercept_"])
        self.n_features_in_ = len(self.coef_)


class SeasonalNaiveForecaster(PointForecaster):
    """Repeats the last ``period`` observations cyclically."""

    kind = "direct"

    def __init__(self, period=1):
        self.period = period

    @property
    def min_train_length(self):
        return self.period

    def fit(self, panel: Panel):
        if self.period < 1:
            raise ConfigError("seasonal period must be >= 1")
        self.n_features_in_ = len(panel.covariate_names)
        self.fitted_ = True
        return self

    def predict(self, request: ForecastRequest) -> np.ndarray:
        m = self.period
        y = request.history.y
        if len(y) < m:
            raise InsufficientDataError(
                f"history of length {len(y)} is shorter than the period {m}"
            )
        tail = y[len(y) - m:]
        return tail[np.arange(request.horizon) % m].astype(float)

    def fitted_values(self, panel: Panel) -> dict:
        out = {}
        for s in panel:
            f = np.full(len(s), np.nan)
            f[self.period:] = s.y[: len(s) - self.period]
            out[s.id] = f
        return out

    def _fitted_state(self):
        return {"fitted_": True}

    def _load_state(self, state):
        self.fitted_ = True


class ARForecaster(PointForecaster):
    """Autoregression of order ``order`` pooled over all series.

    ``coef_[0]`` multiplies the most recent value. Multi-step predictions
    feed the model's own outputs back as lags.
    """

    kind = "iterative"

    def __init__(self, order=1):
        self.order = order

    @property
    def min_train_length(self):
        return self.order + 1

    def fit(self, panel: Panel):
        p = self.order
        if p < 1:
            raise ConfigError("AR order must be >= 1")
        rows, targets = [], []
        for s in panel:
            if len(s) <= p:
                continue
            w = sliding_window_view(s.y, p + 1)
            rows.append(w[:, :p][:, ::-1])
            targets.append(w[:, p])
        if not rows:
            raise InsufficientDataError(
                f"AR({p}) needs a series longer than {p} observations"
            )
        Z = np.concatenate(rows)
        Z = np.column_stack([Z, np.ones(len(Z))])
        beta, *_ = np.linalg.lstsq(Z, np.concatenate(targets), rcond=None)
        self.coef_ = beta[:p]
        self.intercept_ = float(beta[p])
        return self

    def predict_next(self, histories, covariates=None) -> np.ndarray:
        """One-step prediction for each row of ``histories`` (shape ``(B, L)``)."""
        H = np.atleast_2d(histories)
        p = self.order
        return H[:, : -p - 1 : -1] @ self.coef_ + self.intercept_

    def predict(self, request: ForecastRequest) -> np.ndarray:
        check_is_fitted(self, "coef_")
        p = self.order
        y = request.history.y
        if len(y) < p:
            raise InsufficientDataError(f"history of length {len(y)} shorter than order {p}")
        buf = list(y[len(y) - p:])
        out = np.empty(request.horizon)
        for h in range(request.horizon):
            nxt = float(self.predict_next(np.asarray(buf[-p:])[None, :])[0])
            out[h] = nxt
            buf.append(nxt)
        return out

    def fitted_values(self, panel: Panel) -> dict:
        check_is_fitted(self, "coef_")
        p = self.order
        out = {}
        for s in panel:
            f = np.full(len(s), np.nan)
            if len(s) > p:
                w = sliding_window_view(s.y, p)[: len(s) - p]
                f[p:] = self.predict_next(w)
            out[s.id] = f
        return out

    def _fitted_state(self):
        return {"coef_": self.coef_.tolist(), "intercept_": self.intercept_}

    def _load_state(self, state):
        self.coef_ = np.asarray(state["coef_"], dtype=float)
        self.intercept_ = float(state["intercept_"])


class ExternalForecaster(PointForecaster):
    """Replays forecasts produced by an outside model.

    The CSV has columns ``series_id, origin, time, forecast`` where ``origin``
    is the last observed time the forecast was conditioned on. Times may be
    grid positions or raw timestamps of the panel's grid.
    """

    kind = "direct"

    def __init__(self, path=None):
        self.path = path

    def fit(self, panel: Panel):
        if self.path is None or not os.path.exists(self.path):
            raise DataIOError(f"prediction file not found: {self.path}")
        df = pd.read_csv(self.path, dtype={"series_id": str}, float_precision="round_trip")
        missing = {"series_id", "origin", "time", "forecast"} - set(df.columns)
        if missing:
            raise DataError(f"prediction file lacks columns {sorted(missing)}")
        origin = panel.grid.to_index(df["origin"])
        time = panel.grid.to_index(df["time"])
        self.table_ = {
            (sid, int(o), int(t)): float(v)
            for sid, o, t, v in zip(df["series_id"].astype(str), origin, time, df["forecast"])
        }
        return self

    def _lookup(self, key):
        try:
            return self.table_[key]
        except KeyError:
            raise LookupKeyError(f"no external forecast for (series, origin, time)={key}") from None

    def predict(self, request: ForecastRequest) -> np.ndarray:
        check_is_fitted(self, "table_")
        sid, o = request.history.id, request.origin
        return np.array([self._lookup((sid, o, o + h)) for h in range(1, request.horizon + 1)])

    def fitted_values(self, panel: Panel) -> dict:
        check_is_fitted(self, "table_")
        return {
            s.id: np.array([self.table_.get((s.id, t - 1, t), np.nan) for t in s.times])
            for s in panel
        }

    def _fitted_state(self):
        return {"table_": [[k[0], k[1], k[2], v] for k, v in sorted(self.table_.items())]}

    def _load_state(self, state):
        self.table_ = {(r[0], int(r[1]), int(r[2])): float(r[3]) for r in state["table_"]}


class OffsetForecaster(PointForecaster):
    """Adds a constant ``offset`` to every prediction of ``base``.

    Used to probe how the bootstrap reacts to a systematically biased model.
    """

    def __init__(self, base=None, offset=0.0):
        self.base = base
        self.offset = offset

    @property
    def kind(self):
        return self.base.kind

    @property
    def min_train_length(self):
        return self.base.min_train_length

    def fit(self, panel: Panel):
        self.base_ = clone(self.base).fit(panel)
        return self

    def predict(self, request):
        return self.base_.predict(request) + self.offset

    def predict_next(self, histories, covariates=None):
        return self.base_.predict_next(histories, covariates) + self.offset

    def fitted_values(self, panel):
        return {k: v + self.offset for k, v in self.base_.fitted_values(panel).items()}

    def _fitted_state(self):
        return {"base_": forecaster_to_dict(self.base_)}

    def _load_state(self, state):
        self.base_ = forecaster_from_dict(state["base_"])

    def get_params(self, deep=True):
        # base is serialised explicitly in forecaster_to_dict
        return {"base": self.base, "offset": self.offset}


MODEL_KINDS = {
    "ridge": RidgeForecaster,
    "seasonal_naive": SeasonalNaiveForecaster,
    "ar": ARForecaster,
    "external": ExternalForecaster,
    "offset": OffsetForecaster,
}


def make_forecaster(kind: str, **params) -> PointForecaster:
    """Build a forecaster from a config kind and its parameters."""
    try:
        cls = MODEL_KINDS[kind]
    except KeyError:
        raise ConfigError(f"model.kind must be one of {sorted(MODEL_KINDS)}, got {kind!r}") from None
    return cls(**params)


def _kind_name(f):
    for name, cls in MODEL_KINDS.items():
        if type(f) is cls:
            return name
    raise ConfigError(f"cannot serialise forecaster of type {type(f).__name__}")


def forecaster_to_dict(f: PointForecaster, fitted: bool = True) -> dict:
    params = dict(f.get_params(deep=False))
    if isinstance(f, OffsetForecaster):
        params["base"] = forecaster_to_dict(f.base, fitted=False)
    out = {"kind": _kind_name(f), "params": params}
    if fitted:
        out["state"] = f._fitted_state()
    return out


def forecaster_from_dict(d: dict) -> PointForecaster:
    params = dict(d["params"])
    if d["kind"] == "offset":
        params["base"] = forecaster_from_dict(params["base"])
    f = make_forecaster(d["kind"], **params)
    if "state" in d:
        f._load_state(d["state"])
    return f


def describe(f: PointForecaster) -> dict:
    """Parameters-only description used in provenance records.

    User-defined forecasters that are not registered in ``MODEL_KINDS`` are
    described by class name and the ``repr`` of their parameters.
    """
    if type(f) not in MODEL_KINDS.values():
        params = {k: v if isinstance(v, (int, float, str, bool, type(None))) else repr(v)
                  for k, v in f.get_params(deep=False).items()}
        return {"kind": f"{type(f).__module__}.{type(f).__qualname__}", "params": params}
    return forecaster_to_dict(f, fitted=False)
