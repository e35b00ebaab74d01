"""Axis-aligned binary decision trees (CART-style), fit on numpy arrays.

Three split criteria share one vectorized search:

* ``gini``: classification on 0/1 labels, leaves store P(class 1);
* ``mse``: regression by squared-error reduction, leaves store the mean
  target (used for boosting residuals);
* second-order: gain and leaf values from per-row gradient/hessian pairs
  with L2 leaf penalty ``lam`` and split penalty ``gamma`` (leaf value
  -G/(H+lam), splits kept only when gain > 0).

Candidate thresholds are midpoints between consecutive distinct sorted
values. Exact gain ties are broken toward the lowest feature index, then
the lowest threshold, so refits are reproducible.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class TreeParams:
    max_depth: int | None = None
    min_leaf: int = 1
    mtry: int | None = None


@dataclass
class Tree:
    """Flat-array tree: feature[i] < 0 marks node i as a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    n_node: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def to_jsonable(self) -> dict:
        return {
            "feature": self.feature.tolist(),
            "threshold": self.threshold.tolist(),
            "left": self.left.tolist(),
            "right": self.right.tolist(),
            "value": self.value.tolist(),
            "n_node": self.n_node.tolist(),
        }

    @classmethod
    def from_jsonable(cls, data: dict) -> "Tree":
        return cls(
            feature=np.asarray(data["feature"], dtype=np.int32),
            threshold=np.asarray(data["threshold"], dtype=float),
            left=np.asarray(data["left"], dtype=np.int32),
            right=np.asarray(data["right"], dtype=np.int32),
            value=np.asarray(data["value"], dtype=float),
            n_node=np.asarray(data["n_node"], dtype=np.int64),
        )


class _Builder:
    def __init__(self):
        self.feature: list[int] = []
        self.threshold: list[float] = []
        self.left: list[int] = []
        self.right: list[int] = []
        self.value: list[float] = []
        self.n_node: list[int] = []

    def add(self, value: float, n: int) -> int:
        self.feature.append(-1)
        self.threshold.append(np.nan)
        self.left.append(-1)
        self.right.append(-1)
        self.value.append(float(value))
        self.n_node.append(int(n))
        return len(self.feature) - 1

    def finish(self) -> Tree:
        return Tree(
            feature=np.asarray(self.feature, dtype=np.int32),
            threshold=np.asarray(self.threshold, dtype=float),
            left=np.asarray(self.left, dtype=np.int32),
            right=np.asarray(self.right, dtype=np.int32),
            value=np.asarray(self.value, dtype=float),
            n_node=np.asarray(self.n_node, dtype=np.int64),
        )


_GAIN_EPS = 1e-12


def _scan_gini(sorted_target: np.ndarray) -> np.ndarray:
    """Per-boundary score to minimize: n_L*gini_L + n_R*gini_R."""
    n = sorted_target.shape[0]
    ones_left = np.cumsum(sorted_target, axis=0)[:-1]
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    ones_right = ones_left[-1] + sorted_target[-1] - ones_left
    zeros_left = n_left - ones_left
    zeros_right = n_right - ones_right
    score_left = n_left - (ones_left**2 + zeros_left**2) / n_left
    score_right = n_right - (ones_right**2 + zeros_right**2) / n_right
    return score_left + score_right


def _scan_mse(sorted_target: np.ndarray) -> np.ndarray:
    """Per-boundary score to minimize: SSE_L + SSE_R."""
    n = sorted_target.shape[0]
    sum_left = np.cumsum(sorted_target, axis=0)[:-1]
    sq_left = np.cumsum(sorted_target**2, axis=0)[:-1]
    total = sum_left[-1] + sorted_target[-1]
    total_sq = sq_left[-1] + sorted_target[-1] ** 2
    n_left = np.arange(1, n, dtype=float)[:, None]
    n_right = n - n_left
    sse_left = sq_left - sum_left**2 / n_left
    sse_right = (total_sq - sq_left) - (total - sum_left) ** 2 / n_right
    return sse_left + sse_right


def _scan_second_order(sorted_g: np.ndarray, sorted_h: np.ndarray, lam: float) -> np.ndarray:
    """Per-boundary negative gain (excluding the parent term and gamma)."""
    g_left = np.cumsum(sorted_g, axis=0)[:-1]
    h_left = np.cumsum(sorted_h, axis=0)[:-1]
    g_total = g_left[-1] + sorted_g[-1]
    h_total = h_left[-1] + sorted_h[-1]
    g_right = g_total - g_left
    h_right = h_total - h_left
    return -(g_left**2 / (h_left + lam) + g_right**2 / (h_right + lam))


def _pick_split(
    n: int,
    columns: np.ndarray,
    scores: np.ndarray,
    sorted_vals: np.ndarray,
    min_leaf: int,
) -> tuple[int, float, float] | None:
    """First-best (feature, threshold, score) with validity masking."""
    invalid = sorted_vals[1:] <= sorted_vals[:-1]
    if min_leaf > 1:
        sizes = np.arange(1, n)
        size_bad = (sizes < min_leaf) | (n - sizes < min_leaf)
        invalid |= size_bad[:, None]
    scores = np.where(invalid, np.inf, scores)
    per_col_best = np.argmin(scores, axis=0)
    col_scores = scores[per_col_best, np.arange(scores.shape[1])]
    j = int(np.argmin(col_scores))
    if not np.isfinite(col_scores[j]):
        return None
    boundary = int(per_col_best[j])
    lo = sorted_vals[boundary, j]
    hi = sorted_vals[boundary + 1, j]
    threshold = (lo + hi) / 2.0
    if threshold >= hi:
        # midpoint rounded up onto the right value; fall back to the left one
        threshold = lo
    return int(columns[j]), float(threshold), float(col_scores[j])


def _fit(
    X: np.ndarray,
    target: np.ndarray,
    params: TreeParams,
    rng: np.random.Generator | None,
    criterion: str,
    lam: float = 0.0,
    gamma: float = 0.0,
) -> Tree:
    n, d = X.shape
    if n == 0:
        raise ValueError("cannot fit a tree on an empty dataset")
    builder = _Builder()
    mtry = params.mtry if params.mtry is not None else d
    mtry = max(1, min(mtry, d))

    def leaf_value(idx: np.ndarray) -> float:
        if criterion == "second_order":
            g = target[idx, 0].sum()
            h = target[idx, 1].sum()
            denom = h + lam
            return -g / denom if denom > _GAIN_EPS else 0.0
        return float(target[idx].mean())

    def parent_score(idx: np.ndarray) -> float:
        if criterion == "gini":
            ones = float(target[idx].sum())
            count = len(idx)
            return count - (ones**2 + (count - ones) ** 2) / count
        if criterion == "mse":
            t = target[idx]
            return float(np.sum(t * t) - t.sum() ** 2 / len(t))
        g = target[idx, 0].sum()
        h = target[idx, 1].sum()
        return -(g**2) / (h + lam)

    def build(idx: np.ndarray, depth: int) -> int:
        count = len(idx)
        stop = (
            count < 2
            or count < 2 * params.min_leaf
            or (params.max_depth is not None and depth >= params.max_depth)
        )
        if not stop and criterion in ("gini", "mse"):
            t = target[idx]
            stop = bool(np.all(t == t[0]))
        if stop:
            return builder.add(leaf_value(idx), count)

        if mtry < d:
            columns = np.sort(rng.choice(d, size=mtry, replace=False))
        else:
            columns = np.arange(d)
        X_node = X[np.ix_(idx, columns)]
        # quicksort: tie-block order differs from stable sort, but sums at
        # valid (strictly increasing) boundaries are order-invariant
        order = np.argsort(X_node, axis=0)
        sorted_vals = np.take_along_axis(X_node, order, axis=0)

        if criterion == "gini":
            scores = _scan_gini(np.take_along_axis(target[idx][:, None], order, axis=0).astype(float))
        elif criterion == "mse":
            scores = _scan_mse(np.take_along_axis(target[idx][:, None], order, axis=0))
        else:
            g_node = target[idx, 0][:, None]
            h_node = target[idx, 1][:, None]
            scores = _scan_second_order(
                np.take_along_axis(g_node, order, axis=0),
                np.take_along_axis(h_node, order, axis=0),
                lam,
            )

        pick = _pick_split(count, columns, scores, sorted_vals, params.min_leaf)
        if pick is None:
            return builder.add(leaf_value(idx), count)
        feat, threshold, best_score = pick
        if criterion == "second_order":
            gain = 0.5 * (-best_score + parent_score(idx)) - gamma
            if gain <= 0.0:
                return builder.add(leaf_value(idx), count)
        else:
            if parent_score(idx) - best_score <= _GAIN_EPS:
                return builder.add(leaf_value(idx), count)

        node = builder.add(0.0, count)
        builder.feature[node] = feat
        builder.threshold[node] = threshold
        go_left = X[idx, feat] <= threshold
        builder.left[node] = build(idx[go_left], depth + 1)
        builder.right[node] = build(idx[~go_left], depth + 1)
        return node

    build(np.arange(n), 0)
    return builder.finish()


def fit_tree(
    X: np.ndarray,
    y: np.ndarray,
    params: TreeParams,
    rng: np.random.Generator | None = None,
    criterion: str = "gini",
) -> Tree:
    """Fit a classification (gini) or regression (mse) tree."""
    if criterion not in ("gini", "mse"):
        raise ValueError(f"unknown criterion {criterion!r}")
    if params.mtry is not None and params.mtry < X.shape[1] and rng is None:
        raise ValueError("feature subsampling requires an rng")
    return _fit(np.asarray(X, dtype=float), np.asarray(y, dtype=float), params, rng, criterion)


def fit_tree_second_order(
    X: np.ndarray,
    g: np.ndarray,
    h: np.ndarray,
    params: TreeParams,
    lam: float = 1.0,
    gamma: float = 0.0,
) -> Tree:
    """Fit a tree on gradient/hessian pairs with regularized gain."""
    target = np.column_stack([np.asarray(g, dtype=float), np.asarray(h, dtype=float)])
    return _fit(np.asarray(X, dtype=float), target, params, None, "second_order", lam=lam, gamma=gamma)


def tree_predict(tree: Tree, X: np.ndarray) -> np.ndarray:
    """Route all rows simultaneously; returns leaf values."""
    n = X.shape[0]
    pos = np.zeros(n, dtype=np.int64)
    while True:
        feats = tree.feature[pos]
        active = feats >= 0
        if not active.any():
            break
        rows = np.flatnonzero(active)
        at = pos[rows]
        go_left = X[rows, feats[rows]] <= tree.threshold[at]
        pos[rows] = np.where(go_left, tree.left[at], tree.right[at])
    return tree.value[pos]
