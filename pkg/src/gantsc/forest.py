"""CART trees and random forests (classification teachers, regression students).

Both modes share one split search: a node's rows carry a target matrix Y
(one-hot class indicators for classification, real targets for regression)
and the best split maximises

    |S_left|^2 / n_left + |S_right|^2 / n_right

where S is the column-wise target sum. For one-hot Y that is exactly the
weighted Gini impurity decrease; for real targets it is the squared-error
decrease. Thresholds are midpoints between consecutive distinct values and
rows with ``x <= threshold`` go left. Score ties (relative 1e-12) resolve to
the lowest feature index, then the lowest threshold.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import container
from .data import Dataset

TIE_RTOL = 1e-12
CLASSIFICATION = "classification"
REGRESSION = "regression"


class ForestError(ValueError):
    pass


@dataclass
class Tree:
    feature: np.ndarray    # int32, -1 at leaves
    threshold: np.ndarray  # float64
    left: np.ndarray       # int32 child ids, -1 at leaves
    right: np.ndarray
    value: np.ndarray      # (n_nodes, m): class counts or mean targets

    @property
    def n_nodes(self) -> int:
        return len(self.feature)

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Leaf id reached by every row of X."""
        node = np.zeros(X.shape[0], dtype=np.intp)
        rows = np.arange(X.shape[0])
        while rows.size:
            f = self.feature[node[rows]]
            inner = f >= 0
            rows, f = rows[inner], f[inner]
            cur = node[rows]
            go_left = X[rows, f] <= self.threshold[cur]
            node[rows] = np.where(go_left, self.left[cur], self.right[cur])
        return node

    def depth(self) -> int:
        depth = np.zeros(self.n_nodes, dtype=np.intp)
        for i in range(self.n_nodes):  # children always follow their parent
            if self.feature[i] >= 0:
                depth[self.left[i]] = depth[self.right[i]] = depth[i] + 1
        return int(depth.max())


def best_split(X: np.ndarray, Y: np.ndarray, features) -> tuple[int, float, float] | None:
    """Best (feature, threshold, score) over ``features`` or None if no split exists.

    ``features`` must be in ascending order for the tie-break to hold.
    """
    n = Y.shape[0]
    total = Y.sum(axis=0)
    nl = np.arange(1, n, dtype=np.float64)
    nr = n - nl
    best = None
    for f in features:
        x = X[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        valid = xs[:-1] < xs[1:]
        if not valid.any():
            continue
        left = np.cumsum(Y[order], axis=0)[:-1]
        right = total - left
        score = (left * left).sum(axis=1) / nl + (right * right).sum(axis=1) / nr
        score[~valid] = -np.inf
        top = score.max()
        i = int(np.argmax(score >= top - TIE_RTOL * max(1.0, abs(top))))
        if best is None or score[i] > best[2] + TIE_RTOL * max(1.0, abs(best[2])):
            a, b = xs[i], xs[i + 1]
            t = (a + b) / 2.0
            if not a <= t < b:
                t = a
            best = (int(f), float(t), float(score[i]))
    return best


def _candidate_features(rng, X: np.ndarray, d: int, max_features: int) -> list[int]:
    if max_features >= d:
        return list(range(d))
    # draw features in random order until max_features non-constant ones are found
    found = []
    for f in rng.permutation(d):
        x = X[:, f]
        if x.min() < x.max():
            found.append(int(f))
            if len(found) == max_features:
                break
    return sorted(found)


def grow_tree(X: np.ndarray, Y: np.ndarray, max_features: int, rng, classification: bool) -> Tree:
    d = X.shape[1]
    feature, threshold, left, right, value = [], [], [], [], []

    def leaf_value(Yn):
        return Yn.sum(axis=0) if classification else Yn.mean(axis=0)

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(None)
        return len(feature) - 1

    stack = [(new_node(), np.arange(X.shape[0]))]
    while stack:
        node, rows = stack.pop()
        Yn = Y[rows]
        value[node] = leaf_value(Yn)
        if rows.size < 2 or np.all(Yn == Yn[0]):
            continue
        Xn = X[rows]
        split = best_split(Xn, Yn, _candidate_features(rng, Xn, d, max_features))
        if split is None:
            continue
        f, t, _ = split
        mask = Xn[:, f] <= t
        feature[node], threshold[node] = f, t
        li, ri = new_node(), new_node()
        left[node], right[node] = li, ri
        # right pushed first so the left subtree is numbered first
        stack.append((ri, rows[~mask]))
        stack.append((li, rows[mask]))

    return Tree(np.array(feature, dtype=np.int32), np.array(threshold, dtype=np.float64),
                np.array(left, dtype=np.int32), np.array(right, dtype=np.int32),
                np.array(value, dtype=np.float64).reshape(len(feature), -1))


def tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


@dataclass
class RandomForest:
    trees: list[Tree]
    mode: str
    n_outputs: int
    n_features: int
    max_features: int
    bootstrap: bool
    seed: int
    _leaf_tables: list = field(default=None, repr=False, compare=False)

    def _tables(self):
        if self._leaf_tables is None:
            tables = []
            for t in self.trees:
                v = t.value
                if self.mode == CLASSIFICATION:
                    v = v / v.sum(axis=1, keepdims=True)
                tables.append(v)
            self._leaf_tables = tables
        return self._leaf_tables

    def _mean_leaf(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        out = np.zeros((X.shape[0], self.n_outputs))
        for t, table in zip(self.trees, self._tables()):
            out += table[t.apply(X)]
        return out / len(self.trees)

    def check_dim(self, X):
        if X.shape[-1] != self.n_features:
            raise ForestError(f"forest expects {self.n_features} features, got {X.shape[-1]}")


def _single(fn):
    def wrapper(f, x):
        x = np.asarray(x, dtype=np.float64)
        f.check_dim(x)
        if x.ndim == 1:
            return fn(f, x[None, :])[0]
        return fn(f, x)
    wrapper.__name__ = fn.__name__
    wrapper.__doc__ = fn.__doc__
    return wrapper


@_single
def predict_proba(f: RandomForest, X) -> np.ndarray:
    """Average of per-tree leaf class frequencies (rows sum to 1)."""
    if f.mode != CLASSIFICATION:
        raise ForestError("predict_proba needs a classification forest")
    return f._mean_leaf(X)


@_single
def predict_value(f: RandomForest, X) -> np.ndarray:
    """Mean of per-tree leaf values; 1-D when the forest has one output."""
    if f.mode != REGRESSION:
        raise ForestError("predict_value needs a regression forest")
    out = f._mean_leaf(X)
    return out[:, 0] if f.n_outputs == 1 else out


def _fit(X, Y, n_trees, seed, max_features, bootstrap, mode) -> RandomForest:
    if n_trees < 1:
        raise ForestError("n_trees must be >= 1")
    n = X.shape[0]
    trees = []
    for i in range(n_trees):
        rng = tree_rng(seed, i)
        rows = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(grow_tree(X[rows], Y[rows], max_features, rng, mode == CLASSIFICATION))
    return RandomForest(trees, mode, Y.shape[1], X.shape[1], max_features, bootstrap, seed)


def fit_classifier_forest(d: Dataset, n_trees: int, seed: int, max_features: int | None = None,
                          bootstrap: bool = True) -> RandomForest:
    if max_features is None:
        max_features = math.ceil(math.sqrt(d.d))
    Y = np.eye(d.n_classes)[d.labels]
    return _fit(d.features, Y, n_trees, seed, max_features, bootstrap, CLASSIFICATION)


def fit_regression_forest(features, targets, n_trees: int, seed: int, max_features: int | None = None,
                          bootstrap: bool = True) -> RandomForest:
    """Regression forest; 2-D targets give multi-output leaves (one value per column)."""
    X = np.asarray(features, dtype=np.float64)
    Y = np.asarray(targets, dtype=np.float64)
    if Y.ndim == 1:
        Y = Y[:, None]
    if not np.all(np.isfinite(Y)):
        raise ForestError("targets must be finite")
    if max_features is None:
        max_features = X.shape[1]
    return _fit(X, Y, n_trees, seed, max_features, bootstrap, REGRESSION)


def node_count(f: RandomForest) -> int:
    return sum(t.n_nodes for t in f.trees)


def depth_stats(f: RandomForest) -> dict:
    depths = [t.depth() for t in f.trees]
    return {"max": max(depths), "mean": float(np.mean(depths))}


def to_container(f: RandomForest) -> tuple[dict, dict]:
    sizes = np.array([t.n_nodes for t in f.trees], dtype=np.int64)
    arrays = {
        "tree_sizes": sizes,
        "feature": np.concatenate([t.feature for t in f.trees]),
        "threshold": np.concatenate([t.threshold for t in f.trees]),
        "left": np.concatenate([t.left for t in f.trees]),
        "right": np.concatenate([t.right for t in f.trees]),
        "value": np.concatenate([t.value for t in f.trees]),
    }
    meta = {"mode": f.mode, "n_outputs": f.n_outputs, "max_features": f.max_features,
            "bootstrap": f.bootstrap, "seed": f.seed, "n_features": f.n_features}
    return meta, arrays


def from_container(meta: dict, arrays: dict) -> RandomForest:
    bounds = np.concatenate([[0], np.cumsum(arrays["tree_sizes"])])
    trees = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        trees.append(Tree(arrays["feature"][lo:hi], arrays["threshold"][lo:hi], arrays["left"][lo:hi],
                          arrays["right"][lo:hi], arrays["value"][lo:hi]))
    return RandomForest(trees, meta["mode"], meta["n_outputs"], meta["n_features"], meta["max_features"],
                        meta["bootstrap"], meta["seed"])


def save_forest(path, f: RandomForest) -> str:
    meta, arrays = to_container(f)
    return container.save(path, "forest", meta, arrays)


def load_forest(path) -> RandomForest:
    _, meta, arrays = container.load(path, "forest")
    return from_container(meta, arrays)
