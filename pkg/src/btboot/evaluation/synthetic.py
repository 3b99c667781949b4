"""Synthetic panels whose conditional quantiles are known in closed form."""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

from .._random import rng_for
from ..dataset import Panel, Series
from ..exceptions import ConfigError, DataError

NOISE_KINDS = (
    "additive_gaussian",
    "multiplicative_gaussian",
    "horizon_heteroscedastic",
    "biased_pf_probe",
)

BASE_COVARIATES = ("level", "trend", "season_sin", "season_cos")


@dataclass(frozen=True)
class SyntheticSpec:
    """Parameters of a synthetic panel.

    The mean path of series ``i`` is
    ``level_i + trend * t + season_amplitude * sin(2 pi t / season_period)``
    with ``level_i`` drawn uniformly from ``level_range``. Covariates expose
    the mean's building blocks plus ``n_noise_covariates`` pure-noise columns.

    ``horizon_heteroscedastic`` ignores trend and season: the series is
    ``level_i`` plus a Gaussian random walk with step scale ``sigma``, so the
    forecast error from an origin grows with the horizon. ``biased_pf_probe``
    generates additive data and reports ``bias`` as the offset to add to the
    point forecaster.
    """

    n_series: int = 20
    length: int = 300
    noise_kind: str = "additive_gaussian"
    sigma: float = 1.0
    level_range: tuple = (10.0, 100.0)
    trend: float = 0.0
    season_amplitude: float = 0.0
    season_period: int = 24
    bias: float = 0.0
    n_noise_covariates: int = 0
    seed: int = 0
    start: int = 0

    def __post_init__(self):
        if self.noise_kind not in NOISE_KINDS:
            raise ConfigError(f"noise_kind must be one of {NOISE_KINDS}, got {self.noise_kind!r}")
        if not self.sigma > 0:
            raise ConfigError("sigma must be positive")
        if self.n_series < 1 or self.length < 2:
            raise ConfigError("need at least one series with two points")
        if self.season_period < 1:
            raise ConfigError("season_period must be >= 1")
        object.__setattr__(self, "level_range", tuple(float(v) for v in self.level_range))

    def to_dict(self):
        return asdict(self)


class SyntheticOracle:
    """Exact conditional quantiles of a synthetic panel."""

    def __init__(self, spec: SyntheticSpec, mean: dict, values: dict, start: int):
        self.spec = spec
        self._mean = mean
        self._values = values
        self._start = start

    def quantile(self, series_id, t, horizon, tau):
        """Quantile of ``Y[t]`` given observations up to ``t - horizon``."""
        z = norm.ppf(tau)
        k = int(t) - self._start
        sigma = self.spec.sigma
        kind = self.spec.noise_kind
        if kind == "horizon_heteroscedastic":
            origin = k - int(horizon)
            if origin < 0:
                raise DataError("forecast origin precedes the series start")
            return self._values[series_id][origin] + sigma * np.sqrt(horizon) * z
        mu = self._mean[series_id][k]
        if kind == "multiplicative_gaussian":
            return mu * (1.0 + sigma * z)
        return mu + sigma * z


@dataclass
class SyntheticData:
    panel: Panel
    oracle: SyntheticOracle
    spec: SyntheticSpec

    @property
    def forecaster_offset(self) -> float:
        """Offset a probe forecaster should add (non-zero only for the bias probe)."""
        return self.spec.bias if self.spec.noise_kind == "biased_pf_probe" else 0.0


def generate_synthetic(spec: SyntheticSpec) -> SyntheticData:
    """Generate a panel and its oracle; deterministic in ``spec.seed``."""
    t = np.arange(spec.length, dtype=float)
    season = np.sin(2 * np.pi * t / spec.season_period)
    season_cos = np.cos(2 * np.pi * t / spec.season_period)
    lo, hi = spec.level_range
    names = BASE_COVARIATES + tuple(f"noise_{k}" for k in range(spec.n_noise_covariates))
    series, means, values = [], {}, {}
    for i in range(spec.n_series):
        sid = f"s{i:03d}"
        rng = rng_for(spec.seed, "synthetic", i)
        level = rng.uniform(lo, hi)
        z = rng.standard_normal(spec.length)
        if spec.noise_kind == "horizon_heteroscedastic":
            mu = np.full(spec.length, level)
            y = level + spec.sigma * np.cumsum(z)
        else:
            mu = level + spec.trend * t + spec.season_amplitude * season
            if spec.noise_kind == "multiplicative_gaussian":
                if np.any(mu <= 0):
                    raise ConfigError(
                        f"series {sid}: mean path reaches {mu.min():.3g} <= 0, "
                        "which is invalid for multiplicative noise"
                    )
                y = mu * (1.0 + spec.sigma * z)
            else:
                y = mu + spec.sigma * z
        X = np.column_stack([np.full(spec.length, level), t, season, season_cos,
                             rng.standard_normal((spec.length, spec.n_noise_covariates))])
        series.append(Series(sid, spec.start, y, X))
        means[sid] = mu
        values[sid] = y
    panel = Panel(tuple(series), names)
    return SyntheticData(panel, SyntheticOracle(spec, means, values, spec.start), spec)
