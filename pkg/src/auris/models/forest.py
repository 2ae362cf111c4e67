"""Random forest of regression trees on soft labels.

Trees split on variance reduction of the label vectors, so a leaf stores
the mean label vector of its samples. Leaves of one-hot or mixup labels
are therefore probability vectors, and the forest output is their mean.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..exceptions import ConfigurationError, ShapeError

LEAF = -1


@dataclass(frozen=True)
class Tree:
    feature: np.ndarray    # int, LEAF at leaves
    threshold: np.ndarray  # float32; go left when x <= threshold
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray      # (nodes, C)

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X) -> np.ndarray:
        """Leaf index reached by every row of X."""
        node = np.zeros(len(X), dtype=np.int64)
        rows = np.arange(len(X))
        active = self.feature[node] != LEAF
        while active.any():
            r, n = rows[active], node[active]
            go_left = X[r, self.feature[n]] <= self.threshold[n]
            node[r] = np.where(go_left, self.left[n], self.right[n])
            active = self.feature[node] != LEAF
        return node

    def predict(self, X) -> np.ndarray:
        return self.value[self.apply(X)]


@dataclass(frozen=True)
class ForestModel:
    trees: tuple
    n_features: int
    n_classes: int

    def to_tensors(self, prefix="forest/") -> dict[str, np.ndarray]:
        counts = np.array([t.n_nodes for t in self.trees], dtype=np.float32)
        cat = lambda attr: np.concatenate([getattr(t, attr) for t in self.trees]).astype(np.float32)
        return {
            f"{prefix}counts": counts,
            f"{prefix}feature": cat("feature"),
            f"{prefix}threshold": cat("threshold"),
            f"{prefix}left": cat("left"),
            f"{prefix}right": cat("right"),
            f"{prefix}value": np.concatenate([t.value for t in self.trees]).astype(np.float32),
            f"{prefix}shape": np.array([self.n_features, self.n_classes], dtype=np.float32),
        }

    @classmethod
    def from_tensors(cls, tensors, prefix="forest/") -> "ForestModel":
        counts = tensors[f"{prefix}counts"].astype(np.int64)
        n_features, n_classes = (int(v) for v in tensors[f"{prefix}shape"])
        bounds = np.concatenate([[0], np.cumsum(counts)])
        trees = []
        for lo, hi in zip(bounds[:-1], bounds[1:]):
            idx = lambda name: tensors[f"{prefix}{name}"][lo:hi].astype(np.int64)
            trees.append(Tree(idx("feature"), tensors[f"{prefix}threshold"][lo:hi].astype(np.float32),
                              idx("left"), idx("right"),
                              tensors[f"{prefix}value"][lo:hi].astype(np.float64)))
        return cls(tuple(trees), n_features, n_classes)


def best_split(X, Y, features):
    """Exhaustive search for the (feature, threshold) with the lowest summed SSE.

    Returns (feature, threshold, sse) or None when no feature can split.
    """
    n = len(X)
    total_sq = float((Y * Y).sum())
    best = None
    for f in features:
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        ys = Y[order]
        csum = np.cumsum(ys, axis=0)[:-1]
        sq = np.cumsum((ys * ys).sum(axis=1))[:-1]
        n_left = np.arange(1, n)
        valid = xs[1:] > xs[:-1]
        if not valid.any():
            continue
        rsum = ys.sum(axis=0) - csum
        left_sse = sq - (csum * csum).sum(axis=1) / n_left
        right_sse = (total_sq - sq) - (rsum * rsum).sum(axis=1) / (n - n_left)
        sse = np.where(valid, left_sse + right_sse, np.inf)
        i = int(np.argmin(sse))
        if best is None or sse[i] < best[2] - 1e-12:
            thr = np.float32((np.float64(xs[i]) + np.float64(xs[i + 1])) / 2.0)
            # rounding the midpoint to float32 must not swallow the upper value
            if not thr < xs[i + 1]:
                thr = np.float32(xs[i])
            best = (int(f), thr, float(sse[i]))
    return best


def _grow(X, Y, rng, max_depth, max_features, min_samples_leaf):
    n_feat = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def new_node(idx):
        feature.append(LEAF)
        threshold.append(np.float32(0))
        left.append(LEAF)
        right.append(LEAF)
        value.append(Y[idx].mean(axis=0))
        return len(feature) - 1

    stack = [(new_node(np.arange(len(X))), np.arange(len(X)), 0)]
    while stack:
        node, idx, depth = stack.pop()
        if depth >= max_depth or len(idx) < 2 * min_samples_leaf:
            continue
        ys = Y[idx]
        if np.allclose(ys, ys[0]):
            continue
        feats = rng.choice(n_feat, size=min(max_features, n_feat), replace=False)
        split = best_split(X[idx], ys, np.sort(feats))
        if split is None:
            continue
        f, thr, _ = split
        mask = X[idx, f] <= thr
        li, ri = idx[mask], idx[~mask]
        if len(li) < min_samples_leaf or len(ri) < min_samples_leaf:
            continue
        feature[node], threshold[node] = f, thr
        left[node] = new_node(li)
        right[node] = new_node(ri)
        stack.append((right[node], ri, depth + 1))
        stack.append((left[node], li, depth + 1))
    return Tree(np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float32),
                np.array(left, dtype=np.int64), np.array(right, dtype=np.int64), np.array(value))


def rfc_train(X, Y, n_trees=100, max_depth=16, max_features=None, min_samples_leaf=1,
              bootstrap=True, seed=0) -> ForestModel:
    """Fit ``n_trees`` trees on bootstrap samples of (embedding, soft label) pairs.

    ``max_features`` defaults to the square root of the embedding width.
    """
    X = np.asarray(X, dtype=np.float32)
    Y = np.asarray(Y, dtype=np.float64)
    if X.ndim != 2 or Y.ndim != 2 or len(X) != len(Y):
        raise ShapeError(f"expected X (n, d) and Y (n, C) with equal n, got {X.shape} and {Y.shape}")
    if len(X) == 0:
        raise ShapeError("cannot fit a forest on zero samples")
    if n_trees < 1 or max_depth < 0:
        raise ConfigurationError("tree count must be >= 1 and depth >= 0")
    if max_features is None:
        max_features = max(1, int(math.isqrt(X.shape[1])))
    rng = np.random.default_rng(seed)
    trees = []
    for _ in range(n_trees):
        idx = rng.integers(0, len(X), len(X)) if bootstrap else np.arange(len(X))
        trees.append(_grow(X[idx], Y[idx], rng, max_depth, max_features, min_samples_leaf))
    return ForestModel(tuple(trees), X.shape[1], Y.shape[1])


def rfc_predict(forest: ForestModel, X) -> np.ndarray:
    """Mean of leaf vectors over trees, renormalised to sum to one."""
    X = np.atleast_2d(np.asarray(X, dtype=np.float32))
    if X.shape[1] != forest.n_features:
        raise ShapeError(f"forest expects {forest.n_features} features, got {X.shape[1]}")
    p = np.mean([t.predict(X) for t in forest.trees], axis=0)
    return p / p.sum(axis=1, keepdims=True)
