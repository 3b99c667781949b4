"""Dependence statistics: sample distance correlation and the two-sample KS test."""

from __future__ import annotations

import math

import numpy as np

from .._random import rng_for


def _double_centered(v):
    d = np.abs(v[:, None] - v[None, :])
    return d - d.mean(axis=0)[None, :] - d.mean(axis=1)[:, None] + d.mean()


def distance_correlation(x, y, cap: int = 2000, seed: int = 0) -> float:
    """Sample distance correlation of two real vectors, in ``[0, 1]``.

    Uses the double-centred pairwise distance matrices (V-statistic form).
    Inputs longer than ``cap`` are replaced by a seeded uniform subsample of
    ``cap`` paired points. Returns 0 when either input is constant.
    """
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if len(x) != len(y):
        raise ValueError(f"length mismatch: {len(x)} vs {len(y)}")
    if len(x) < 2:
        raise ValueError("distance correlation needs at least two points")
    if cap is not None and len(x) > cap:
        keep = np.sort(rng_for(seed, "dcor").choice(len(x), size=cap, replace=False))
        x, y = x[keep], y[keep]
    A = _double_centered(x)
    B = _double_centered(y)
    dcov2 = (A * B).mean()
    dvar_x = (A * A).mean()
    dvar_y = (B * B).mean()
    if dvar_x <= 0 or dvar_y <= 0:
        return 0.0
    r2 = max(dcov2, 0.0) / math.sqrt(dvar_x * dvar_y)
    return float(min(math.sqrt(r2), 1.0))


def kolmogorov_sf(lam: float, terms: int = 100) -> float:
    """Survival function of the Kolmogorov distribution, ``P(K > lam)``.

    The alternating series is used for ``lam >= 1``; below that the
    equivalent theta-function form converges much faster. Both are cut at
    ``terms`` terms.
    """
    if lam <= 0:
        return 1.0
    k = np.arange(1, terms + 1)
    if lam >= 1.0:
        s = 2.0 * np.sum((-1.0) ** (k - 1) * np.exp(-2.0 * k**2 * lam**2))
    else:
        cdf = math.sqrt(2 * math.pi) / lam * np.sum(np.exp(-((2 * k - 1) ** 2) * math.pi**2 / (8 * lam**2)))
        s = 1.0 - cdf
    return float(min(max(s, 0.0), 1.0))


def ks_two_sample(a, b) -> tuple[float, float]:
    """Two-sample Kolmogorov-Smirnov statistic and asymptotic p-value.

    ``D`` is the largest gap between the right-continuous empirical CDFs,
    evaluated at every pooled sample point. The p-value uses the Kolmogorov
    limit law with effective size ``n*m / (n + m)``.
    """
    a = np.sort(np.asarray(a, dtype=float).ravel())
    b = np.sort(np.asarray(b, dtype=float).ravel())
    if len(a) == 0 or len(b) == 0:
        raise ValueError("KS test needs two non-empty samples")
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / len(a)
    fb = np.searchsorted(b, pooled, side="right") / len(b)
    d = float(np.max(np.abs(fa - fb)))
    ne = len(a) * len(b) / (len(a) + len(b))
    return d, kolmogorov_sf(math.sqrt(ne) * d)
