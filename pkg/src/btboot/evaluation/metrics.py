"""Scoring rules for quantile and point forecasts."""

import numpy as np

from ..exceptions import NumericalError


def coverage(truths, qforecasts, tau=None) -> float:
    """Fraction of points with ``truth <= quantile forecast`` (ties count as covered)."""
    y = np.asarray(truths, dtype=float)
    q = np.asarray(qforecasts, dtype=float)
    if y.shape != q.shape:
        raise ValueError(f"length mismatch: {y.shape} vs {q.shape}")
    if y.size == 0:
        raise ValueError("coverage of an empty set")
    return float(np.mean(y <= q))


def ace(co, tau):
    """Absolute coverage error ``|CO - tau|``."""
    return abs(co - tau)


def pinball(truth, qf, tau):
    """Quantile (pinball) loss; works elementwise on arrays."""
    d = np.asarray(truth, dtype=float) - np.asarray(qf, dtype=float)
    out = np.where(d >= 0, tau * d, (tau - 1.0) * d)
    return float(out) if out.ndim == 0 else out


def mape(truths, preds, return_excluded=False):
    """Mean of ``|truth - pred| / |truth|`` over rows with non-zero truth."""
    y = np.asarray(truths, dtype=float)
    p = np.asarray(preds, dtype=float)
    if y.shape != p.shape:
        raise ValueError("length mismatch")
    keep = y != 0
    if not keep.any():
        raise NumericalError("MAPE undefined: every truth is zero")
    value = float(np.mean(np.abs(y[keep] - p[keep]) / np.abs(y[keep])))
    if return_excluded:
        return value, int((~keep).sum())
    return value
