"""Resampling primitives shared by every distribution-forecast path.

One quantile convention is used throughout the package: linear interpolation
between order statistics at position ``(n - 1) * tau``.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .._random import rng_for
from ..exceptions import ConfigError, DegenerateRatioError, NumericalError

FORMULAS = ("additive", "multiplicative")
DENOMINATORS = ("backtest_forecast", "observed_response")

# default guard is this fraction of the mean absolute denominator
DEFAULT_RELATIVE_DELTA = 1e-6


@dataclass(frozen=True)
class BootstrapConfig:
    """Bootstrap settings.

    ``delta=None`` resolves to ``1e-6`` times the mean absolute denominator
    of the residual collection in use.
    """

    formula: str = "additive"
    B: int = 1000
    ratio_denominator: str = "backtest_forecast"
    seed: int = 0
    delta: float | None = None

    def __post_init__(self):
        if self.formula not in FORMULAS:
            raise ConfigError(f"bootstrap.formula must be one of {FORMULAS}, got {self.formula!r}")
        if self.ratio_denominator not in DENOMINATORS:
            raise ConfigError(
                f"bootstrap.ratio_denominator must be one of {DENOMINATORS}, got {self.ratio_denominator!r}"
            )
        if int(self.B) < 1:
            raise ConfigError("bootstrap.B must be >= 1")
        if self.delta is not None and not self.delta > 0:
            raise ConfigError("bootstrap.delta must be positive")

    def to_dict(self):
        return asdict(self)


def check_tau(tau):
    t = np.asarray(tau, dtype=float)
    if np.any(~(t > 0) | ~(t < 1)):
        raise ValueError(f"quantile levels must lie in (0, 1), got {tau}")
    return t


def quantile(samples, tau):
    """Sample quantile of sorted ``samples`` at level(s) ``tau``."""
    tau = check_tau(tau)
    x = np.asarray(samples, dtype=float)
    n = len(x)
    if n == 0:
        raise NumericalError("quantile of an empty sample")
    pos = (n - 1) * tau
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, n - 1)
    frac = pos - lo
    out = x[lo] + frac * (x[hi] - x[lo])
    return float(out) if out.ndim == 0 else out


def draw_indices(n: int, u: np.ndarray) -> np.ndarray:
    """Map uniforms on ``[0, 1)`` to indices ``0..n-1`` with equal mass."""
    return np.minimum((u * n).astype(np.int64), n - 1)


def _uniforms(cfg, rng, size):
    rng = rng if rng is not None else rng_for(cfg.seed, "point")
    return rng.random(size)


def _values(g, attr="eps"):
    if hasattr(g, attr) and not isinstance(g, np.ndarray):
        return np.asarray(getattr(g, attr), dtype=float)
    return np.asarray(g, dtype=float).ravel()


def bootstrap_additive(pf: float, residuals, cfg: BootstrapConfig, rng=None) -> np.ndarray:
    """``B`` draws of ``pf + eps`` with ``eps`` resampled with replacement, sorted."""
    eps = _values(residuals)
    if len(eps) == 0:
        raise NumericalError("cannot bootstrap from an empty residual set")
    u = _uniforms(cfg, rng, int(cfg.B))
    return np.sort(pf + eps[draw_indices(len(eps), u)])


@dataclass(frozen=True)
class RatioSet:
    ratios: np.ndarray
    excluded: int = 0


def default_delta(coll, denominator: str) -> float:
    den = coll.forecast if denominator == "backtest_forecast" else coll.observed
    scale = float(np.mean(np.abs(den))) if len(den) else 0.0
    return DEFAULT_RELATIVE_DELTA * scale if scale > 0 else np.finfo(float).tiny


def build_ratio_set(residuals, cfg: BootstrapConfig, delta: float | None = None) -> RatioSet:
    """Error ratios ``eps / denominator`` for the selected residual records.

    Records whose denominator is smaller than ``delta`` in magnitude are
    excluded and counted.
    """
    if not all(hasattr(residuals, a) for a in ("eps", "forecast", "observed")):
        raise TypeError("build_ratio_set needs residual records with eps, forecast and observed")
    eps = _values(residuals, "eps")
    attr = "forecast" if cfg.ratio_denominator == "backtest_forecast" else "observed"
    den = _values(residuals, attr)
    if len(eps) == 0:
        raise NumericalError("cannot build ratios from an empty residual set")
    if delta is None:
        delta = cfg.delta if cfg.delta is not None else default_delta(residuals, cfg.ratio_denominator)
    keep = np.abs(den) >= delta
    if not keep.any():
        raise DegenerateRatioError(
            f"all {len(eps)} denominators are below the guard {delta:g}; use the additive formula"
        )
    return RatioSet(eps[keep] / den[keep], int((~keep).sum()))


def bootstrap_multiplicative(pf: float, ratios, cfg: BootstrapConfig, rng=None) -> np.ndarray:
    """``B`` draws of ``pf * (1 + r)`` with ``r`` resampled with replacement, sorted."""
    r = ratios.ratios if isinstance(ratios, RatioSet) else np.asarray(ratios, dtype=float)
    if len(r) == 0:
        raise NumericalError("cannot bootstrap from an empty ratio set")
    u = _uniforms(cfg, rng, int(cfg.B))
    return np.sort(pf * (1.0 + r[draw_indices(len(r), u)]))


def quantile_shortcut_direct(pf: float, values, taus, formula: str = "additive"):
    """Quantile forecasts without resampling, for direct models.

    ``values`` are residuals (additive) or error ratios (multiplicative).
    For a negative point forecast the multiplicative map is decreasing, so
    the ratio quantile at ``1 - tau`` is used.
    """
    v = np.sort(np.asarray(values.ratios if isinstance(values, RatioSet) else values, dtype=float))
    if len(v) == 0:
        raise NumericalError("empty residual set")
    taus = check_tau(taus)
    if formula == "additive":
        return pf + quantile(v, taus)
    if formula != "multiplicative":
        raise ConfigError(f"unknown formula {formula!r}")
    if pf >= 0:
        return pf * (1.0 + quantile(v, taus))
    return pf * (1.0 + quantile(v, 1.0 - taus))
