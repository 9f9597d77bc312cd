"""Weighted least-squares regression trees with deterministic split selection.

Splits minimize the weighted sum of squared errors. Ties in split gain
(within a small relative tolerance) break to the lowest feature index, then
the smallest threshold, so a fit is a pure function of (X, y, w) and the
hyperparameters. The leaf-size floor counts weight in units of the smallest
positive sample weight, which makes it reduce to a row count for equal
weights while keeping a weight-2 row interchangeable with a duplicated row.
Node statistics are accumulated sequentially (cumsum) so those two fits are
bit-identical when the duplicate leads the row order.
"""

from __future__ import annotations

import numpy as np

from .errors import ParameterError

# Relative tolerance treating near-equal split gains as exact ties.
_GAIN_RTOL = 1e-9
# A node whose best gain is below this fraction of its impurity stays a leaf.
_SPLIT_RTOL = 1e-12
# Slack on the leaf-weight floor so rescaled weight vectors round the same way.
_LEAF_RTOL = 1e-12


class RegressionTree:
    """A fitted binary regression tree stored as flat node arrays."""

    __slots__ = ("feature", "threshold", "left", "right", "value")

    def __init__(self, feature, threshold, left, right, value):
        self.feature = np.asarray(feature, dtype=np.int64)
        self.threshold = np.asarray(threshold, dtype=float)
        self.left = np.asarray(left, dtype=np.int64)
        self.right = np.asarray(right, dtype=np.int64)
        self.value = np.asarray(value, dtype=float)

    @property
    def n_nodes(self) -> int:
        return self.feature.size

    @property
    def n_leaves(self) -> int:
        return int((self.feature < 0).sum())

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        cur = np.zeros(X.shape[0], dtype=np.int64)
        while True:
            live = np.flatnonzero(self.feature[cur] >= 0)
            if live.size == 0:
                return self.value[cur]
            nodes = cur[live]
            goes_left = X[live, self.feature[nodes]] <= self.threshold[nodes]
            cur[live] = np.where(goes_left, self.left[nodes], self.right[nodes])


def presort_columns(X: np.ndarray) -> list[np.ndarray]:
    """Stable per-feature sort orders, reusable across many fits on the same X."""
    X = np.asarray(X, dtype=float)
    return [np.argsort(X[:, j], kind="stable") for j in range(X.shape[1])]


def _best_split_for_feature(vs, ws, ys, W, S, min_leaf_weight):
    """Best (gain, threshold) along one feature, given rows sorted by value."""
    cw = np.cumsum(ws)
    cs = np.cumsum(ws * ys)
    wl, sl = cw[:-1], cs[:-1]
    wr, sr = W - wl, S - sl
    floor = min_leaf_weight * (1.0 - _LEAF_RTOL)
    valid = (vs[:-1] < vs[1:]) & (wl >= floor) & (wr >= floor)
    if not valid.any():
        return None
    parent = S * S / W
    gain = np.where(valid, sl * sl / np.where(valid, wl, 1.0) + sr * sr / np.where(valid, wr, 1.0) - parent, -np.inf)
    gmax = gain.max()
    if not gmax > 0.0:
        return None
    # smallest threshold among near-tied positions
    pos = int(np.flatnonzero(gain >= gmax - _GAIN_RTOL * gmax)[0])
    return gmax, 0.5 * (vs[pos] + vs[pos + 1])


def grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    w: np.ndarray,
    max_depth: int | None,
    min_leaf: float,
    orders: list[np.ndarray] | None = None,
) -> RegressionTree:
    """Fit a regression tree by exhaustive split search.

    ``orders`` may carry precomputed ``presort_columns(X)`` output; gradient
    boosting reuses one presort across all rounds.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    w = np.asarray(w, dtype=float)
    n, d = X.shape
    if n == 0:
        raise ParameterError("cannot fit a tree on zero rows")
    if min_leaf <= 0:
        raise ParameterError("min_leaf must be positive")
    positive = w[w > 0]
    if positive.size == 0:
        raise ParameterError("sample weights must not all be zero")
    min_leaf_weight = min_leaf * float(positive.min())
    if orders is None:
        orders = presort_columns(X)

    feature, threshold, left, right, value = [], [], [], [], []
    member = np.zeros(n, dtype=bool)

    def new_node() -> int:
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        return len(feature) - 1

    # (node_id, row index array in ascending order, depth)
    stack = [(new_node(), np.arange(n), 0)]
    while stack:
        nid, idx, depth = stack.pop()
        wn = w[idx]
        yn = y[idx]
        W = float(np.cumsum(wn)[-1])
        S = float(np.cumsum(wn * yn)[-1])
        Q = float(np.cumsum(wn * yn * yn)[-1])
        value[nid] = S / W
        if (max_depth is not None and depth >= max_depth) or W < 2.0 * min_leaf_weight * (1.0 - _LEAF_RTOL):
            continue
        node_sse = max(Q - S * S / W, 0.0)
        member[idx] = True
        best_gain, best_feat, best_thr = 0.0, -1, 0.0
        for j in range(d):
            oj = orders[j]
            sel = oj[member[oj]]
            found = _best_split_for_feature(X[sel, j], w[sel], y[sel], W, S, min_leaf_weight)
            if found is None:
                continue
            gain, thr = found
            if gain > best_gain * (1.0 + _GAIN_RTOL) or best_feat < 0:
                best_gain, best_feat, best_thr = gain, j, thr
        member[idx] = False
        if best_feat < 0 or best_gain <= _SPLIT_RTOL * node_sse:
            continue
        goes_left = X[idx, best_feat] <= best_thr
        feature[nid] = best_feat
        threshold[nid] = best_thr
        lid, rid = new_node(), new_node()
        left[nid], right[nid] = lid, rid
        stack.append((rid, idx[~goes_left], depth + 1))
        stack.append((lid, idx[goes_left], depth + 1))

    return RegressionTree(feature, threshold, left, right, value)
