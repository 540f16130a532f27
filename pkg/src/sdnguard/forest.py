"""Entropy-criterion random forest used as the tabular baseline."""
from __future__ import annotations

import math

import numpy as np

from . import kernels
from ._rng import substream


class _Node:
    __slots__ = ("feature", "threshold", "left", "right", "counts")

    def __init__(self, counts, feature=-1, threshold=0.0, left=None, right=None):
        self.counts = counts
        self.feature = feature
        self.threshold = threshold
        self.left = left
        self.right = right


def _entropy_sum(counts):
    # n * H(p) in nats, the quantity best_split minimizes per child
    n = counts.sum()
    nz = counts[counts > 0]
    return float(n * math.log(n) - np.sum(nz * np.log(nz))) if n > 0 else 0.0


class DecisionTree:
    def __init__(self, max_depth=3, max_features=None, rng=None):
        self.max_depth = max_depth
        self.max_features = max_features
        self.rng = rng if rng is not None else np.random.default_rng(0)
        self.root = None
        self.n_classes = 0

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        self.n_classes = int(n_classes if n_classes is not None else y.max() + 1)
        self.root = self._grow(X, y, 0)
        return self

    def _grow(self, X, y, depth):
        counts = np.bincount(y, minlength=self.n_classes).astype(np.float64)
        node = _Node(counts)
        if depth >= self.max_depth or len(y) < 2 or np.count_nonzero(counts) < 2:
            return node
        d = X.shape[1]
        k = self.max_features or d
        features = self.rng.choice(d, size=min(k, d), replace=False)
        parent = _entropy_sum(counts) / len(y)
        best, best_feature, best_threshold = math.inf, -1, 0.0
        for f in features:
            order = np.argsort(X[:, f], kind="stable")
            xs = np.ascontiguousarray(X[order, f])
            imp, cut = kernels.best_split(xs, np.ascontiguousarray(y[order]), self.n_classes)
            if cut < 0 or not imp < best - 1e-12:
                continue
            lo, hi = xs[cut - 1], xs[cut]
            thr = lo + (hi - lo) / 2.0
            if not lo <= thr < hi:
                thr = lo
            best, best_feature, best_threshold = imp, int(f), float(thr)
        if best_feature < 0 or best >= parent - 1e-12:
            return node
        go_left = X[:, best_feature] <= best_threshold
        node.feature = best_feature
        node.threshold = best_threshold
        node.left = self._grow(X[go_left], y[go_left], depth + 1)
        node.right = self._grow(X[~go_left], y[~go_left], depth + 1)
        return node

    def predict(self, X):
        X = np.asarray(X, dtype=np.float64)
        out = np.empty(len(X), dtype=np.int64)
        for i, row in enumerate(X):
            node = self.root
            while node.left is not None:
                node = node.left if row[node.feature] <= node.threshold else node.right
            out[i] = int(np.argmax(node.counts))
        return out


class RandomForest:
    """Bootstrap per tree, sqrt(d) candidate features per split, majority vote.

    Vote ties resolve to the lowest class index.
    """

    def __init__(self, n_trees=100, max_depth=3, seed=32, max_features="sqrt"):
        self.n_trees = n_trees
        self.max_depth = max_depth
        self.seed = seed
        self.max_features = max_features
        self.trees = []
        self.n_classes = 0

    def fit(self, X, y, n_classes=None):
        X = np.asarray(X, dtype=np.float64)
        y = np.asarray(y, dtype=np.int64)
        if len(y) == 0:
            raise ValueError("cannot fit a forest on zero samples")
        self.n_classes = int(n_classes if n_classes is not None else y.max() + 1)
        d = X.shape[1]
        k = max(1, int(math.sqrt(d))) if self.max_features == "sqrt" else (self.max_features or d)
        rng = substream(self.seed, "forest")
        self.trees = []
        for _ in range(self.n_trees):
            sample = rng.integers(0, len(y), size=len(y))
            tree = DecisionTree(self.max_depth, k, rng)
            tree.fit(X[sample], y[sample], self.n_classes)
            self.trees.append(tree)
        return self

    def predict(self, X):
        votes = np.zeros((len(X), self.n_classes), dtype=np.int64)
        for tree in self.trees:
            votes[np.arange(len(X)), tree.predict(X)] += 1
        return np.argmax(votes, axis=1)
