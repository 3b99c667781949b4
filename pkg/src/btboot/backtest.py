"""Move-forward backtesting and the predictive-residual collection it produces."""

from __future__ import annotations

import json
import logging
import os
from dataclasses import asdict, dataclass, field
from typing import Mapping, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from scipy import linalg
from sklearn.base import clone

from ._random import rng_for
from .dataset import Panel, TimeWindow, slice_series, split_at
from .exceptions import (
    BtbootError,
    ConfigError,
    DataError,
    DataIOError,
    EmptyPlanError,
    LookupKeyError,
    ProvenanceMismatchError,
)
from .forecasters import ForecastRequest, PointForecaster, describe

logger = logging.getLogger(__name__)

PERTURBATION_MODES = ("none", "gaussian_noise", "historic_estimate_file")

# canonical feature name -> column attribute
FEATURE_ALIASES = {
    "horizon": "h",
    "h": "h",
    "split_point": "j",
    "j": "j",
    "target_time": "t",
    "t": "t",
    "forecast": "forecast",
    "observed": "observed",
}


@dataclass(frozen=True)
class CovariatePerturbation:
    """How future covariates are replaced during the backtest.

    ``gaussian_noise`` adds zero-mean noise with ``noise_scale[name]`` to each
    targeted covariate. ``historic_estimate_file`` substitutes values from
    ``estimates``, keyed by ``(series_id, t, covariate)``.
    """

    mode: str = "none"
    noise_scale: Mapping[str, float] = field(default_factory=dict)
    target_covariates: Sequence[str] = ()
    estimates: Mapping | None = None

    def __post_init__(self):
        if self.mode not in PERTURBATION_MODES:
            raise ConfigError(f"perturbation mode must be one of {PERTURBATION_MODES}, got {self.mode!r}")
        if any(v < 0 for v in self.noise_scale.values()):
            raise ConfigError("noise scales must be non-negative")
        targets = tuple(self.target_covariates) or tuple(self.noise_scale)
        object.__setattr__(self, "target_covariates", targets)
        object.__setattr__(self, "noise_scale", dict(self.noise_scale))

    def validate(self, covariate_names):
        unknown = (set(self.noise_scale) | set(self.target_covariates)) - set(covariate_names)
        if unknown:
            raise ConfigError(f"perturbation references unknown covariates {sorted(unknown)}")
        if self.mode == "historic_estimate_file" and self.estimates is None:
            raise ConfigError("historic_estimate_file mode requires an estimates table")

    def to_dict(self):
        return {
            "mode": self.mode,
            "noise_scale": dict(self.noise_scale),
            "target_covariates": list(self.target_covariates),
            "estimates": None if self.estimates is None else f"<{len(self.estimates)} entries>",
        }


def load_estimates(path, grid=None) -> dict:
    """Read ``series_id, timestamp, covariate, value`` rows into a lookup table."""
    if not os.path.exists(path):
        raise DataIOError(f"estimates file not found: {path}")
    df = pd.read_csv(path, dtype={"series_id": str}, float_precision="round_trip")
    need = {"series_id", "timestamp", "covariate", "value"}
    if not need <= set(df.columns):
        raise DataError(f"estimates file needs columns {sorted(need)}")
    t = grid.to_index(df["timestamp"]) if grid is not None else df["timestamp"].astype(int).to_numpy()
    return {
        (sid, int(tt), str(c)): float(v)
        for sid, tt, c, v in zip(df["series_id"], t, df["covariate"], df["value"])
    }


def perturb_covariates(x, perturbation: CovariatePerturbation, rng, covariate_names,
                       series_id=None, times=None) -> np.ndarray:
    """Return a perturbed copy of covariate row(s) ``x``.

    ``x`` is one row ``(p,)`` or a block ``(k, p)``; ``times`` gives the grid
    time of each row and is only needed for the file-based mode.
    """
    x = np.asarray(x, dtype=float)
    if perturbation.mode == "none" or not perturbation.target_covariates:
        return x.copy()
    block = np.atleast_2d(x).copy()
    cols = [list(covariate_names).index(c) for c in perturbation.target_covariates]
    if perturbation.mode == "gaussian_noise":
        scale = np.array([perturbation.noise_scale.get(c, 0.0) for c in perturbation.target_covariates])
        block[:, cols] += rng.standard_normal((block.shape[0], len(cols))) * scale
    else:
        times = np.atleast_1d(times)
        for r, t in enumerate(times):
            for c, name in zip(cols, perturbation.target_covariates):
                key = (series_id, int(t), name)
                if key not in perturbation.estimates:
                    raise LookupKeyError(f"historic estimate missing for {key}")
                block[r, c] = perturbation.estimates[key]
    return block.reshape(x.shape)


@dataclass(frozen=True)
class BacktestPlan:
    """Split schedule: ``j = start, start + step, ...`` up to the last time minus one."""

    start: int
    step: int = 1
    max_horizon: int = 1
    perturbation: CovariatePerturbation = field(default_factory=CovariatePerturbation)
    meta_covariates: Sequence[str] = ()

    def __post_init__(self):
        if self.step < 1:
            raise ConfigError("backtest step must be >= 1")
        if self.max_horizon < 1:
            raise ConfigError("backtest max_horizon must be >= 1")
        object.__setattr__(self, "meta_covariates", tuple(self.meta_covariates))

    def split_points(self, panel: Panel) -> list:
        if len(panel) == 0:
            raise EmptyPlanError("cannot backtest an empty panel")
        if self.start < panel.min_start:
            raise EmptyPlanError(
                f"backtest start {self.start} precedes the first observation {panel.min_start}; "
                "the training split would be empty"
            )
        last = panel.max_end - 1
        if self.start > last:
            raise EmptyPlanError(
                f"no valid split point: start {self.start} > last feasible split {last}"
            )
        return list(range(self.start, last + 1, self.step))

    def to_dict(self):
        d = asdict(self)
        d["perturbation"] = self.perturbation.to_dict()
        d["meta_covariates"] = list(self.meta_covariates)
        return d


@dataclass(frozen=True)
class MetaVector:
    series_id: str
    split_point: int
    target_time: int
    horizon: int
    forecast: float
    observed: float
    extra: Mapping[str, float] = field(default_factory=dict)


@dataclass(frozen=True)
class ResidualRecord:
    eps: float
    meta: MetaVector


_INT_COLS = ("j", "t", "h")
_FLOAT_COLS = ("eps", "forecast", "observed")


class ResidualCollection:
    """Immutable columnar store of predictive residuals and their meta data.

    Columns are ``eps, series_id, j, t, h, forecast, observed`` plus optional
    ``extra`` columns; ``eps == observed - forecast`` holds row by row.
    """

    def __init__(self, eps, series_id, j, t, h, forecast, observed, extra=None, provenance=None):
        cols = {
            "eps": np.asarray(eps, dtype=float),
            "series_id": np.asarray(series_id, dtype=object),
            "j": np.asarray(j, dtype=np.int64),
            "t": np.asarray(t, dtype=np.int64),
            "h": np.asarray(h, dtype=np.int64),
            "forecast": np.asarray(forecast, dtype=float),
            "observed": np.asarray(observed, dtype=float),
        }
        n = len(cols["eps"])
        if any(len(v) != n for v in cols.values()):
            raise DataError("residual columns must have equal length")
        if not np.all(np.isfinite(cols["eps"])):
            raise DataError("residuals must be finite")
        if n and np.any(cols["h"] < 1):
            raise DataError("horizons must be >= 1")
        extra = {k: np.asarray(v, dtype=float) for k, v in (extra or {}).items()}
        for v in (*cols.values(), *extra.values()):
            v.setflags(write=False)
        self._cols = cols
        self._extra = extra
        self.provenance = dict(provenance or {})

    def __len__(self):
        return len(self._cols["eps"])

    def __getattr__(self, name):
        cols = self.__dict__.get("_cols")
        if cols is not None and name in cols:
            return cols[name]
        raise AttributeError(name)

    @property
    def extra(self):
        return self._extra

    @property
    def records(self) -> list:
        c = self._cols
        return [
            ResidualRecord(
                float(c["eps"][k]),
                MetaVector(
                    c["series_id"][k], int(c["j"][k]), int(c["t"][k]), int(c["h"][k]),
                    float(c["forecast"][k]), float(c["observed"][k]),
                    {name: float(v[k]) for name, v in self._extra.items()},
                ),
            )
            for k in range(len(self))
        ]

    def feature(self, name: str) -> np.ndarray:
        """Values of a meta feature (``horizon``, ``forecast``, ``extra.<x>`` ...)."""
        if name in FEATURE_ALIASES:
            return self._cols[FEATURE_ALIASES[name]].astype(float)
        if name.startswith("extra.") and name[6:] in self._extra:
            return self._extra[name[6:]]
        raise KeyError(f"unknown meta feature {name!r}")

    def take(self, idx) -> "ResidualCollection":
        idx = np.asarray(idx)
        c = self._cols
        return ResidualCollection(
            *(c[k][idx] for k in ("eps", "series_id", "j", "t", "h", "forecast", "observed")),
            extra={k: v[idx] for k, v in self._extra.items()},
            provenance=self.provenance,
        )

    def canonical_order(self) -> np.ndarray:
        c = self._cols
        sid = c["series_id"].astype(str)
        return np.lexsort((c["t"], sid, c["j"]))

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame({k: self._cols[k] for k in ("eps", "series_id", "j", "t", "h", "forecast", "observed")})
        for k, v in self._extra.items():
            df[f"extra.{k}"] = v
        return df

    @classmethod
    def from_frame(cls, df: pd.DataFrame, provenance=None) -> "ResidualCollection":
        need = ["eps", "series_id", "j", "t", "h", "forecast", "observed"]
        missing = [c for c in need if c not in df.columns]
        if missing:
            raise DataError(f"residual table lacks columns {missing}")
        extra = {c[6:]: df[c].to_numpy(float) for c in df.columns if c.startswith("extra.")}
        return cls(
            df["eps"].to_numpy(float), df["series_id"].astype(str).to_numpy(object),
            df["j"].to_numpy(np.int64), df["t"].to_numpy(np.int64), df["h"].to_numpy(np.int64),
            df["forecast"].to_numpy(float), df["observed"].to_numpy(float),
            extra=extra, provenance=provenance,
        )

    def save(self, path, provenance_path=None) -> None:
        """Write the residual CSV and, next to it, the JSON provenance sidecar."""
        self.to_frame().to_csv(path, index=False, float_format="%.17g")
        if provenance_path is None:
            root, _ = os.path.splitext(str(path))
            provenance_path = root + ".provenance.json"
        if provenance_path:
            with open(provenance_path, "w") as fh:
                json.dump(self.provenance, fh, indent=2, sort_keys=True, default=_json_default)

    @classmethod
    def load(cls, path, provenance_path=None) -> "ResidualCollection":
        if not os.path.exists(path):
            raise DataIOError(f"residual file not found: {path}")
        df = pd.read_csv(path, dtype={"series_id": str}, float_precision="round_trip")
        if provenance_path is None:
            root, _ = os.path.splitext(str(path))
            provenance_path = root + ".provenance.json"
        prov = {}
        if provenance_path and os.path.exists(provenance_path):
            with open(provenance_path) as fh:
                prov = json.load(fh)
        return cls.from_frame(df, prov)

    def equals(self, other: "ResidualCollection") -> bool:
        if len(self) != len(other) or set(self._extra) != set(other._extra):
            return False
        return all(np.array_equal(self._cols[k], other._cols[k]) for k in self._cols) and all(
            np.array_equal(v, other._extra[k]) for k, v in self._extra.items()
        )


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serialisable: {type(o).__name__}")


_COLLECTED = ("eps", "series_id", "j", "t", "h", "forecast", "observed")


def _run_splits(panel, forecaster, plan, seed, splits):
    cols = {k: [] for k in _COLLECTED}
    extra = {c: [] for c in plan.meta_covariates}
    extra_idx = [panel.covariate_index(c) for c in plan.meta_covariates]
    warnings = []
    min_len = forecaster.min_train_length
    ordered = sorted(panel.series, key=lambda s: s.id)
    for j in splits:
        train, _ = split_at(panel, j)
        train = train.replace_series(s for s in train if len(s) >= min_len)
        if len(train) == 0:
            warnings.append({"split_point": j, "reason": f"no series with >= {min_len} training observations"})
            continue
        try:
            fitted = clone(forecaster).fit(train)
        except (BtbootError, ValueError, ArithmeticError, linalg.LinAlgError) as exc:
            warnings.append({"split_point": j, "reason": f"fit failed: {exc}"})
            logger.warning("backtest split %d skipped: %s", j, exc)
            continue
        rng = rng_for(seed, "backtest", j)
        for s in ordered:
            if s.start > j or s.end <= j or s.id not in train:
                continue
            hmax = min(plan.max_horizon, s.end - j)
            hist = slice_series(s, TimeWindow(s.start, j))
            times = np.arange(j + 1, j + hmax + 1)
            fut = s.X[j + 1 - s.start: j + hmax + 1 - s.start]
            fut = perturb_covariates(fut, plan.perturbation, rng, panel.covariate_names, s.id, times)
            pred = np.asarray(fitted.predict(ForecastRequest(hist, fut, hmax)), dtype=float)
            obs = s.y[j + 1 - s.start: j + hmax + 1 - s.start]
            cols["eps"].append(obs - pred)
            cols["series_id"].append(np.full(hmax, s.id, dtype=object))
            cols["j"].append(np.full(hmax, j))
            cols["t"].append(times)
            cols["h"].append(times - j)
            cols["forecast"].append(pred)
            cols["observed"].append(obs)
            for c, k in zip(plan.meta_covariates, extra_idx):
                extra[c].append(fut[:, k])
    cat = {k: (np.concatenate(v) if v else np.zeros(0)) for k, v in cols.items()}
    cat_extra = {k: (np.concatenate(v) if v else np.zeros(0)) for k, v in extra.items()}
    return cat, cat_extra, warnings


def _chunks(seq, n):
    n = max(1, min(n, len(seq)))
    bounds = np.linspace(0, len(seq), n + 1).astype(int)
    return [seq[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]


def run_backtest(panel: Panel, forecaster: PointForecaster, plan: BacktestPlan,
                 seed: int = 0, workers: int = 1) -> ResidualCollection:
    """Harvest predictive residuals with a move-forward backtest.

    For every split point ``j`` the forecaster is refitted on observations
    with ``t <= j`` and each series with later observations is forecast
    ``1..min(max_horizon, d_i - j)`` steps ahead. Split points are processed
    in ``workers`` contiguous chunks; the merged result does not depend on
    the number of workers.
    """
    plan.perturbation.validate(panel.covariate_names)
    for c in plan.meta_covariates:
        panel.covariate_index(c)
    splits = plan.split_points(panel)
    chunks = _chunks(splits, workers)
    if workers > 1 and len(chunks) > 1:
        parts = Parallel(n_jobs=workers)(
            delayed(_run_splits)(panel, forecaster, plan, seed, ch) for ch in chunks
        )
    else:
        parts = [_run_splits(panel, forecaster, plan, seed, ch) for ch in chunks]

    base_prov = {
        "plan": plan.to_dict(),
        "model": describe(forecaster),
        "data_fingerprint": panel.fingerprint(),
        "seed": seed,
        "min_train_policy": (
            f"series with fewer than {forecaster.min_train_length} training observations "
            "are skipped at that split"
        ),
    }
    collections = []
    for ch, (cols, extra, warns) in zip(chunks, parts):
        prov = dict(base_prov, split_points=list(ch), warnings=warns)
        collections.append(ResidualCollection(**cols, extra=extra, provenance=prov))
    merged = merge_collections(collections)
    failed = [w for w in merged.provenance["warnings"] if w["reason"].startswith("fit failed")]
    if len(failed) == len(splits):
        raise EmptyPlanError(f"forecaster fit failed at every split point; first: {failed[0]['reason']}")
    if len(merged) == 0:
        raise EmptyPlanError("backtest produced no residuals")
    return merged


_SPLIT_KEYS = ("split_points", "warnings", "n_records")


def merge_collections(collections: Sequence[ResidualCollection]) -> ResidualCollection:
    """Concatenate collections from disjoint split ranges in canonical order."""
    if not collections:
        raise ValueError("nothing to merge")
    core = [{k: v for k, v in c.provenance.items() if k not in _SPLIT_KEYS} for c in collections]
    if any(json.dumps(p, sort_keys=True, default=_json_default) != json.dumps(core[0], sort_keys=True, default=_json_default) for p in core[1:]):
        raise ProvenanceMismatchError("collections come from different backtest configurations")
    extra_keys = set(collections[0].extra)
    if any(set(c.extra) != extra_keys for c in collections):
        raise ProvenanceMismatchError("collections carry different extra meta columns")

    def cat(get):
        return np.concatenate([get(c) for c in collections])

    merged = ResidualCollection(
        *(cat(lambda c, k=k: c._cols[k]) for k in _COLLECTED),
        extra={k: cat(lambda c, k=k: c.extra[k]) for k in sorted(extra_keys)},
    )
    order = merged.canonical_order()
    prov = dict(core[0])
    prov["split_points"] = sorted(j for c in collections for j in c.provenance.get("split_points", []))
    prov["warnings"] = sorted(
        (w for c in collections for w in c.provenance.get("warnings", [])), key=lambda w: w["split_point"]
    )
    out = merged.take(order)
    out.provenance = dict(prov, n_records=len(out))
    return out
