"""Residual selectors: pick the residuals relevant to a future point.

All selectors share one mechanism. Fitting assigns every residual record to
a *cell*; a future point's meta data is mapped to a cell the same way and
the records of that cell are returned. Cells smaller than ``n_min`` fall
back to the full collection and are flagged.
"""

from __future__ import annotations

import operator
import re
from dataclasses import dataclass
from typing import Mapping, NamedTuple

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from ..backtest import ResidualCollection
from ..exceptions import ConfigError, LookupKeyError
from .tree import RegressionTree

_OPS = {
    "<": operator.lt,
    "<=": operator.le,
    "≤": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "≥": operator.ge,
}

_FUTURE_KEYS = {
    "h": "horizon",
    "horizon": "horizon",
    "j": "split_point",
    "split_point": "split_point",
    "t": "target_time",
    "target_time": "target_time",
    "forecast": "forecast",
}


def canonical_feature(name: str) -> str:
    if name in _FUTURE_KEYS:
        return _FUTURE_KEYS[name]
    if name == "observed":
        raise ConfigError("selectors cannot use 'observed': it is unknown for a future point")
    if name.startswith("extra.") and len(name) > 6:
        return name
    raise ConfigError(f"unknown meta feature {name!r}")


def future_value(meta: Mapping, name: str):
    """Look up ``name`` in a future point's meta mapping (aliases accepted)."""
    canon = canonical_feature(name)
    for key in (canon, name, *[k for k, v in _FUTURE_KEYS.items() if v == canon]):
        if key in meta:
            return meta[key]
    if canon.startswith("extra.") and isinstance(meta.get("extra"), Mapping) and canon[6:] in meta["extra"]:
        return meta["extra"][canon[6:]]
    raise LookupKeyError(f"future meta does not provide feature {name!r}")


def record_feature(coll: ResidualCollection, name: str) -> np.ndarray:
    canon = canonical_feature(name)
    try:
        return coll.feature(canon)
    except KeyError:
        raise LookupKeyError(f"residual collection has no feature {name!r}") from None


@dataclass(frozen=True)
class Predicate:
    """Threshold test on one meta feature: ``field op threshold``.

    ``op="in-range"`` takes two thresholds and tests ``lo <= x <= hi``.
    """

    field: str
    op: str
    thresholds: tuple

    def __post_init__(self):
        canonical_feature(self.field)
        th = tuple(float(v) for v in np.atleast_1d(self.thresholds))
        if self.op == "in-range":
            if len(th) != 2 or th[0] > th[1]:
                raise ConfigError(f"in-range needs lo <= hi, got {th}")
        elif self.op in _OPS:
            if len(th) != 1:
                raise ConfigError(f"operator {self.op!r} takes one threshold")
        else:
            raise ConfigError(f"unknown operator {self.op!r}")
        object.__setattr__(self, "thresholds", th)

    def __call__(self, values):
        v = np.asarray(values, dtype=float)
        if self.op == "in-range":
            return (v >= self.thresholds[0]) & (v <= self.thresholds[1])
        return _OPS[self.op](v, self.thresholds[0])

    def __str__(self):
        return f"{self.field} {self.op} {' '.join(f'{t:g}' for t in self.thresholds)}"


_RULE_RE = re.compile(r"^\s*([\w.]+)\s*(<=|>=|<|>|≤|≥|in-range|in)\s*(.+?)\s*$")


def parse_rule(text: str) -> Predicate:
    """Parse ``"horizon <= 3"`` or ``"forecast in-range 10 20"``."""
    m = _RULE_RE.match(text)
    if not m:
        raise ConfigError(f"cannot parse rule {text!r}; expected 'field op threshold'")
    field, op, rest = m.groups()
    if op == "in":
        op = "in-range"
    try:
        th = tuple(float(v) for v in rest.replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"non-numeric threshold in rule {text!r}") from None
    return Predicate(field, op, th)


class Selection(NamedTuple):
    indices: np.ndarray
    fallback: bool


class BaseSelector(BaseEstimator):
    variant = "base"

    def __init__(self, n_min=30):
        self.n_min = n_min

    def feature_names(self) -> tuple:
        return ()

    def fit(self, coll: ResidualCollection):
        if len(coll) == 0:
            raise ConfigError("cannot fit a selector on an empty residual collection")
        keys = self._record_keys(coll)
        self.n_records_ = len(coll)
        self.all_ = np.arange(len(coll))
        self.all_.setflags(write=False)
        order = np.argsort(keys, kind="stable")
        uniq, starts = np.unique(keys[order], return_index=True)
        bounds = list(starts[1:]) + [len(keys)]
        self.cells_ = {}
        for key, a, b in zip(uniq.tolist(), starts, bounds):
            members = np.sort(order[a:b])
            members.setflags(write=False)
            self.cells_[key] = members
        self.record_keys_ = keys
        return self

    def _record_keys(self, coll) -> np.ndarray:
        raise NotImplementedError

    def cell_keys(self, features: Mapping[str, np.ndarray]) -> np.ndarray:
        """Cell of each future point given column arrays of its features."""
        raise NotImplementedError

    def members(self, key) -> Selection:
        check_is_fitted(self, "cells_")
        idx = self.cells_.get(key)
        if idx is None or len(idx) < self.n_min:
            return Selection(self.all_, True)
        return Selection(idx, False)

    def select(self, future_meta: Mapping) -> Selection:
        """Indices of the records relevant to one future point."""
        cols = {f: np.array([future_value(future_meta, f)], dtype=float) for f in self.feature_names()}
        return self.members(int(self.cell_keys(cols)[0]))

    def to_dict(self) -> dict:
        return {"variant": self.variant, "params": self.get_params()}


class IdentitySelector(BaseSelector):
    """Every future point gets the whole collection."""

    variant = "identity"

    def __init__(self, n_min=1):
        self.n_min = n_min

    def _record_keys(self, coll):
        return np.zeros(len(coll), dtype=np.int64)

    def cell_keys(self, features):
        n = len(next(iter(features.values()))) if features else 1
        return np.zeros(n, dtype=np.int64)

    def members(self, key):
        check_is_fitted(self, "cells_")
        return Selection(self.all_, False)

    def select(self, future_meta=None):
        return self.members(0)


class RuleSelector(BaseSelector):
    """Threshold rules on meta features.

    The rules split the meta space into cells by their joint truth values.
    A future point receives the records whose rule outcomes match its own;
    for a point satisfying every rule these are the records satisfying every
    rule.

    Parameters
    ----------
    rules : sequence of str or Predicate
        E.g. ``["horizon <= 3"]``; several thresholds on one feature give
        one bucket per interval.
    n_min : int
        Minimum cell size before falling back to the full collection.
    """

    variant = "rules"

    def __init__(self, rules=(), n_min=30):
        self.rules = rules
        self.n_min = n_min

    @property
    def predicates(self) -> list:
        return [r if isinstance(r, Predicate) else parse_rule(r) for r in self.rules]

    def feature_names(self):
        return tuple(dict.fromkeys(p.field for p in self.predicates))

    def _pack(self, outcomes) -> np.ndarray:
        weights = 1 << np.arange(outcomes.shape[1], dtype=np.int64)
        return (outcomes.astype(np.int64) * weights).sum(axis=1) if outcomes.shape[1] else np.zeros(len(outcomes), np.int64)

    def _record_keys(self, coll):
        preds = self.predicates
        if len(preds) > 62:
            raise ConfigError("at most 62 rules are supported")
        outcomes = np.column_stack([p(record_feature(coll, p.field)) for p in preds]) if preds else np.zeros((len(coll), 0), bool)
        return self._pack(outcomes)

    def cell_keys(self, features):
        preds = self.predicates
        if not preds:
            n = len(next(iter(features.values()))) if features else 1
            return np.zeros(n, dtype=np.int64)
        return self._pack(np.column_stack([p(future_value(features, p.field)) for p in preds]))

    def describe_cell(self, key) -> list:
        return [str(p) if key >> k & 1 else f"not ({p})" for k, p in enumerate(self.predicates)]

    def to_dict(self):
        return {"variant": self.variant,
                "params": {"rules": [str(p) for p in self.predicates], "n_min": self.n_min}}


class TreeSelector(BaseSelector):
    """Regression tree on meta features with the residual as target.

    A future point receives the records sharing its leaf.
    """

    variant = "tree"

    def __init__(self, features=("horizon",), max_depth=3, min_leaf=30, n_min=30):
        self.features = features
        self.max_depth = max_depth
        self.min_leaf = min_leaf
        self.n_min = n_min

    def feature_names(self):
        return tuple(self.features)

    def _design(self, coll):
        return np.column_stack([record_feature(coll, f) for f in self.features])

    def _record_keys(self, coll):
        if not self.features:
            raise ConfigError("tree selector needs at least one feature")
        for f in self.features:
            canonical_feature(f)
        X = self._design(coll)
        self.tree_ = RegressionTree(self.max_depth, self.min_leaf).fit(X, coll.eps)
        return self.tree_.apply(X)

    def cell_keys(self, features):
        X = np.column_stack([np.asarray(future_value(features, f), dtype=float) for f in self.features])
        return self.tree_.apply(X)

    def to_dict(self):
        d = {"variant": self.variant, "params": self.get_params()}
        d["params"]["features"] = list(self.features)
        if hasattr(self, "tree_"):
            d["tree"] = self.tree_.structure()
        return d


SELECTOR_VARIANTS = {"identity": IdentitySelector, "rules": RuleSelector, "tree": TreeSelector}


def make_selector(variant="identity", features=("horizon",), max_depth=3, min_leaf=30,
                  n_min=30, rules=()) -> BaseSelector:
    """Build an unfitted selector from config values."""
    if variant == "identity":
        return IdentitySelector()
    if variant == "rules":
        return RuleSelector(rules=tuple(rules), n_min=n_min)
    if variant == "tree":
        return TreeSelector(features=tuple(features), max_depth=max_depth, min_leaf=min_leaf, n_min=n_min)
    raise ConfigError(f"selector.variant must be one of {sorted(SELECTOR_VARIANTS)}, got {variant!r}")


def selector_from_dict(d: dict, coll: ResidualCollection) -> BaseSelector:
    """Restore a fitted selector; cell membership is recomputed from ``coll``."""
    params = dict(d.get("params", {}))
    variant = d["variant"]
    if variant == "tree" and "tree" in d:
        sel = TreeSelector(**{**params, "features": tuple(params.get("features", ("horizon",)))})
        X = sel._design(coll)
        sel.tree_ = RegressionTree.from_structure(d["tree"], X, coll.eps, sel.max_depth, sel.min_leaf)
        keys = sel.tree_.apply(X)
        sel._record_keys = lambda c, _k=keys: _k
        BaseSelector.fit(sel, coll)
        del sel._record_keys
        return sel
    cls = SELECTOR_VARIANTS.get(variant)
    if cls is None:
        raise ConfigError(f"unknown selector variant {variant!r}")
    return cls(**params).fit(coll)
