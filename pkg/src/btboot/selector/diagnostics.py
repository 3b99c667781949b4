"""Diagnostics for choosing and checking residual selectors."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from joblib import Parallel, delayed

from ..backtest import ResidualCollection
from .selectors import BaseSelector, RuleSelector, TreeSelector, record_feature
from .stats import distance_correlation, ks_two_sample


@dataclass
class DependenceReport:
    correlations: list = field(default_factory=list)
    n_records: int = 0
    subsample: int | None = None
    seed: int = 0

    @property
    def ranking(self):
        return [c["feature"] for c in self.correlations]

    def to_dict(self):
        return asdict(self)


def dependence_report(coll: ResidualCollection, features, cap: int = 2000, seed: int = 0,
                      workers: int = 1) -> DependenceReport:
    """Distance correlation of each meta feature with the residuals, highest first."""
    cols = [(f, record_feature(coll, f)) for f in features]
    eps = coll.eps
    if workers > 1 and len(cols) > 1:
        values = Parallel(n_jobs=workers)(delayed(distance_correlation)(x, eps, cap, seed) for _, x in cols)
    else:
        values = [distance_correlation(x, eps, cap, seed) for _, x in cols]
    rows = [{"feature": f, "dcor": float(v)} for (f, _), v in zip(cols, values)]
    rows.sort(key=lambda r: (-r["dcor"], r["feature"]))
    return DependenceReport(rows, len(coll), cap if len(coll) > cap else None, seed)


def _describe(sel, key, coll, members):
    h = coll.h[members]
    out = {"cell": int(key), "size": int(len(members)),
           "horizon_range": [int(h.min()), int(h.max())] if len(h) else None}
    if isinstance(sel, RuleSelector):
        out["rules"] = sel.describe_cell(key)
    return out


def selector_sanity_check(sel: BaseSelector, coll: ResidualCollection, alpha: float = 0.05) -> dict:
    """KS test of each cell's residuals against the whole collection.

    A selector with no effect selects residuals distributed like the full
    collection; cells flagged ``significant`` differ at level ``alpha``.
    The representative future points are the cells that occur among the
    records themselves.
    """
    rows = []
    keys = sorted(sel.cells_) if hasattr(sel, "cells_") else [0]
    for key in keys:
        selection = sel.members(key)
        d, p = ks_two_sample(coll.eps[selection.indices], coll.eps)
        row = _describe(sel, key, coll, selection.indices)
        row.update(ks_statistic=d, p_value=p, significant=bool(p < alpha), fallback=selection.fallback)
        rows.append(row)
    return {
        "variant": sel.variant,
        "alpha": alpha,
        "cells": rows,
        "any_significant": any(r["significant"] for r in rows),
    }
