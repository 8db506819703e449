"""Datasets, splits, scaling and the Gaussian-mixture benchmark."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import container


class DataError(ValueError):
    pass


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray
    n_classes: int
    feature_names: tuple[str, ...] | None = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        X = np.asarray(self.features, dtype=np.float64)
        y = np.asarray(self.labels)
        if X.ndim != 2 or X.shape[0] < 1 or X.shape[1] < 1:
            raise DataError(f"features must be a non-empty n x d matrix, got shape {X.shape}")
        if y.shape != (X.shape[0],):
            raise DataError("labels must be a vector with one entry per row")
        if not np.all(np.isfinite(X)):
            r, c = np.argwhere(~np.isfinite(X))[0]
            raise DataError(f"non-finite feature at row {r}, column {c}")
        if self.n_classes < 2:
            raise DataError("n_classes must be at least 2")
        if y.size and (y.min() < 0 or y.max() >= self.n_classes):
            raise DataError("labels must lie in [0, n_classes)")
        if self.feature_names is not None and len(self.feature_names) != X.shape[1]:
            raise DataError("feature_names length does not match feature count")
        X.setflags(write=False)
        y = y.astype(np.int64)
        y.setflags(write=False)
        object.__setattr__(self, "features", X)
        object.__setattr__(self, "labels", y)

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def subset(self, rows) -> "Dataset":
        return Dataset(self.features[rows], self.labels[rows], self.n_classes,
                       self.feature_names, dict(self.metadata))

    def with_features(self, features) -> "Dataset":
        return Dataset(features, self.labels, self.n_classes, self.feature_names, dict(self.metadata))


def _parse_float(cell: str, row: int, col: int) -> float:
    try:
        v = float(cell)
    except ValueError:
        raise DataError(f"unparseable cell {cell!r} at row {row}, column {col}") from None
    if not math.isfinite(v):
        raise DataError(f"non-finite value {cell!r} at row {row}, column {col}")
    return v


def load_csv(path, label_column: str | int = -1) -> Dataset:
    """Read a numeric CSV with one categorical label column.

    A header row is detected when any of its non-label cells fails to parse
    as a number. Labels are re-encoded in order of first appearance and the
    mapping is kept in ``metadata["label_mapping"]``.
    """
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such file: {path}")
    with path.open(newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise DataError(f"{path} is empty")
    width = len(rows[0])

    header = None
    first = rows[0]
    if isinstance(label_column, str) and not label_column.lstrip("-").isdigit():
        header = [c.strip() for c in first]
        if label_column not in header:
            raise DataError(f"label column {label_column!r} not in header {header}")
        li = header.index(label_column)
    else:
        li = int(label_column) % width
        others = [c for j, c in enumerate(first) if j != li]
        try:
            [float(c) for c in others]
        except ValueError:
            header = [c.strip() for c in first]
    body = rows[1:] if header is not None else rows
    offset = 2 if header is not None else 1

    feats, raw_labels = [], []
    for i, r in enumerate(body):
        if len(r) != width:
            raise DataError(f"row {i + offset} has {len(r)} cells, expected {width}")
        feats.append([_parse_float(c, i + offset, j) for j, c in enumerate(r) if j != li])
        raw_labels.append(r[li].strip())

    mapping: dict[str, int] = {}
    labels = [mapping.setdefault(v, len(mapping)) for v in raw_labels]
    if len(mapping) < 2:
        raise DataError("label column has fewer than 2 distinct values")
    names = tuple(h for j, h in enumerate(header) if j != li) if header else None
    return Dataset(np.array(feats, dtype=np.float64), np.array(labels), len(mapping), names,
                   {"source": str(path), "label_mapping": mapping})


def save_csv(path, features, labels=None, feature_names=None):
    features = np.asarray(features)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        names = list(feature_names) if feature_names else [f"x{j}" for j in range(features.shape[1])]
        w.writerow(names + (["label"] if labels is not None else []))
        for i, row in enumerate(features):
            cells = [repr(float(v)) for v in row]
            if labels is not None:
                cells.append(str(int(labels[i])))
            w.writerow(cells)


def save_dataset(path, d: Dataset) -> str:
    meta = {"n_classes": d.n_classes, "feature_names": list(d.feature_names) if d.feature_names else None,
            "metadata": d.metadata}
    return container.save(path, "dataset", meta, {"features": d.features, "labels": d.labels})


def load_dataset(path) -> Dataset:
    _, meta, arrays = container.load(path, "dataset")
    names = tuple(meta["feature_names"]) if meta["feature_names"] else None
    return Dataset(arrays["features"], arrays["labels"], meta["n_classes"], names, meta["metadata"])


def split(d: Dataset, fractions, seed: int) -> list[Dataset]:
    fractions = np.asarray(fractions, dtype=np.float64)
    if np.any(fractions <= 0) or abs(fractions.sum() - 1.0) > 1e-9:
        raise DataError("fractions must be positive and sum to 1")
    perm = np.random.default_rng(seed).permutation(d.n)
    cuts = np.rint(np.cumsum(fractions) * d.n).astype(int)
    cuts[-1] = d.n
    parts = np.split(perm, cuts[:-1])
    if any(len(p) == 0 for p in parts):
        raise DataError(f"split of {d.n} rows by {fractions.tolist()} leaves an empty part")
    return [d.subset(p) for p in parts]


@dataclass(frozen=True)
class Scaler:
    mean: np.ndarray
    std: np.ndarray
    constant: np.ndarray  # bool mask; std is stored as 1.0 there

    def transform(self, X) -> np.ndarray:
        Z = (np.asarray(X, dtype=np.float64) - self.mean) / self.std
        Z[:, self.constant] = 0.0
        return Z

    def inverse(self, Z) -> np.ndarray:
        return np.asarray(Z, dtype=np.float64) * self.std + self.mean

    def to_arrays(self) -> dict:
        return {"scaler_mean": self.mean, "scaler_std": self.std,
                "scaler_constant": self.constant.astype(np.uint8)}

    @classmethod
    def from_arrays(cls, arrays) -> "Scaler":
        return cls(arrays["scaler_mean"], arrays["scaler_std"], arrays["scaler_constant"].astype(bool))


def fit_scaler(d: Dataset | np.ndarray) -> Scaler:
    X = d.features if isinstance(d, Dataset) else np.asarray(d, dtype=np.float64)
    if X.shape[0] < 2:
        raise DataError("need at least 2 rows to fit a scaler")
    mean = X.mean(axis=0)
    std = X.std(axis=0)
    # a zero std (e.g. from subnormal spreads) is as degenerate as an exactly constant column
    constant = np.all(X == X[0], axis=0) | (std == 0)
    std = np.where(constant, 1.0, std)
    return Scaler(mean, std, constant)


def apply_scaler(s: Scaler, d: Dataset) -> Dataset:
    return d.with_features(s.transform(d.features))


def class_prior(d: Dataset) -> np.ndarray:
    counts = np.bincount(d.labels, minlength=d.n_classes).astype(np.float64)
    return counts / counts.sum()


# Gaussian-mixture benchmark. Component means are the vertices of a regular
# 2K-gon in the first two coordinates with classes alternating around the
# polygon, so adjacent components sit exactly `separation` apart and the
# remaining d-2 coordinates are pure noise.

def benchmark_means(d: int, K: int, separation: float) -> np.ndarray:
    """Return a (K, 2, d) array of component means."""
    m = 2 * K
    radius = separation / (2.0 * math.sin(math.pi / m)) if separation > 0 else 0.0
    means = np.zeros((K, 2, d))
    for v in range(m):
        angle = 2.0 * math.pi * v / m
        means[v % K, v // K, 0] = radius * math.cos(angle)
        means[v % K, v // K, 1] = radius * math.sin(angle)
    return means


def bayes_accuracy(means: np.ndarray, step: float = 0.01, pad: float = 9.0) -> float:
    """Accuracy of the Bayes rule for equal-prior classes.

    Integrates max_k p(x, k) over the two informative coordinates on a
    uniform grid; the noise coordinates integrate out exactly.
    """
    mu = means[:, :, :2]
    lim = np.abs(mu).max() + pad
    grid = np.arange(-lim, lim + step / 2, step)
    K = mu.shape[0]
    phi = lambda t: np.exp(-0.5 * t * t) / math.sqrt(2 * math.pi)
    joint = np.zeros((K, grid.size, grid.size))
    for k in range(K):
        for j in range(mu.shape[1]):
            joint[k] += np.outer(phi(grid - mu[k, j, 0]), phi(grid - mu[k, j, 1]))
    joint /= K * mu.shape[1]
    return float(joint.max(axis=0).sum() * step * step)


def bayes_classify(X: np.ndarray, means: np.ndarray) -> np.ndarray:
    X = np.asarray(X)
    sq = ((X[:, None, None, :] - means[None]) ** 2).sum(-1)  # n, K, 2
    logp = np.logaddexp(-0.5 * sq[:, :, 0], -0.5 * sq[:, :, 1])
    return logp.argmax(axis=1)


def make_synthetic_benchmark(n: int, d: int, K: int, separation: float, seed: int) -> Dataset:
    if n < 4 * K or d < 2 or separation < 0:
        raise DataError("need n >= 4K, d >= 2 and separation >= 0")
    rng = np.random.default_rng(seed)
    means = benchmark_means(d, K, separation)
    labels = rng.integers(0, K, size=n)
    comp = rng.integers(0, 2, size=n)
    X = rng.standard_normal((n, d)) + means[labels, comp]
    meta = {"benchmark": {"n": n, "d": d, "K": K, "separation": separation, "seed": seed},
            "bayes_accuracy": bayes_accuracy(means)}
    return Dataset(X, labels, K, None, meta)
