"""CART regression tree that keeps the training indices in its leaves."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted

from ..exceptions import InsufficientDataError

# relative slack when comparing split gains, so float noise does not break ties
_GAIN_RTOL = 1e-12


@dataclass
class Node:
    feature: int = -1
    threshold: float = float("nan")
    left: "Node | None" = None
    right: "Node | None" = None
    indices: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))
    value: float = 0.0
    leaf_id: int = -1

    @property
    def is_leaf(self):
        return self.left is None


def best_split(X, y, min_leaf):
    """Best variance-reduction split as ``(gain, feature, threshold)``.

    Candidate thresholds are midpoints between consecutive distinct values.
    Ties go to the lower feature index, then the lower threshold. Returns
    ``None`` when no admissible split exists.
    """
    n, p = X.shape
    yc = y - y.mean()
    total = yc @ yc
    best = None
    for f in range(p):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = yc[order]
        csum = np.cumsum(ys)
        csq = np.cumsum(ys * ys)
        nl = np.arange(1, n)
        sl, ql = csum[:-1], csq[:-1]
        sr, qr = csum[-1] - sl, csq[-1] - ql
        nr = n - nl
        sse = (ql - sl**2 / nl) + (qr - sr**2 / nr)
        ok = (xs[1:] > xs[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not ok.any():
            continue
        gains = np.where(ok, total - sse, -np.inf)
        k = int(np.argmax(gains))
        g = float(gains[k])
        if best is None or g > best[0] + _GAIN_RTOL * max(total, 1.0):
            best = (g, f, 0.5 * (xs[k] + xs[k + 1]))
    return best


class RegressionTree(RegressorMixin, BaseEstimator):
    """Least-squares regression tree.

    Besides the usual ``predict``, :meth:`apply` returns the leaf of each row
    and ``leaves_[k].indices`` lists the training rows routed to leaf ``k``.
    Rows with ``x[feature] <= threshold`` go left.
    """

    def __init__(self, max_depth=3, min_leaf=30):
        self.max_depth = max_depth
        self.min_leaf = min_leaf

    def fit(self, X, y):
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        if X.ndim != 2 or len(X) != len(y):
            raise ValueError("X must be 2-d with one row per target")
        if len(y) < max(self.min_leaf, 1):
            raise InsufficientDataError(
                f"tree needs at least min_leaf={self.min_leaf} records, got {len(y)}"
            )
        self.n_features_in_ = X.shape[1]
        self.leaves_ = []
        self.root_ = self._grow(X, y, np.arange(len(y)), 0)
        return self

    def _grow(self, X, y, idx, depth):
        node = Node(indices=idx, value=float(y[idx].mean()))
        split = None
        if depth < self.max_depth and len(idx) >= 2 * self.min_leaf:
            split = best_split(X[idx], y[idx], self.min_leaf)
        yc = y[idx] - node.value
        if split is None or split[0] <= _GAIN_RTOL * max(float(yc @ yc), 1e-300) or split[0] <= 0:
            node.leaf_id = len(self.leaves_)
            self.leaves_.append(node)
            return node
        _, f, thr = split
        node.feature, node.threshold = f, thr
        go_left = X[idx, f] <= thr
        node.left = self._grow(X, y, idx[go_left], depth + 1)
        node.right = self._grow(X, y, idx[~go_left], depth + 1)
        return node

    def apply(self, X) -> np.ndarray:
        check_is_fitted(self, "root_")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        out = np.empty(len(X), dtype=np.int64)
        stack = [(self.root_, np.arange(len(X)))]
        while stack:
            node, rows = stack.pop()
            if node.is_leaf:
                out[rows] = node.leaf_id
                continue
            left = X[rows, node.feature] <= node.threshold
            stack.append((node.left, rows[left]))
            stack.append((node.right, rows[~left]))
        return out

    def predict(self, X) -> np.ndarray:
        values = np.array([leaf.value for leaf in self.leaves_])
        return values[self.apply(X)]

    def structure(self) -> dict:
        def enc(node):
            if node.is_leaf:
                return {"leaf": node.leaf_id, "value": node.value, "size": int(len(node.indices))}
            return {"feature": node.feature, "threshold": node.threshold,
                    "left": enc(node.left), "right": enc(node.right)}

        return enc(self.root_)

    @classmethod
    def from_structure(cls, struct, X, y, max_depth, min_leaf) -> "RegressionTree":
        """Rebuild a fitted tree from :meth:`structure` and its training rows."""
        tree = cls(max_depth=max_depth, min_leaf=min_leaf)
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float)
        tree.n_features_in_ = X.shape[1]
        leaves = {}

        def dec(s, idx):
            if "leaf" in s:
                node = Node(indices=idx, value=float(y[idx].mean()) if len(idx) else s["value"],
                            leaf_id=int(s["leaf"]))
                leaves[node.leaf_id] = node
                return node
            go_left = X[idx, s["feature"]] <= s["threshold"]
            return Node(feature=int(s["feature"]), threshold=float(s["threshold"]),
                        left=dec(s["left"], idx[go_left]), right=dec(s["right"], idx[~go_left]))

        tree.root_ = dec(struct, np.arange(len(y)))
        tree.leaves_ = [leaves[k] for k in sorted(leaves)]
        return tree
