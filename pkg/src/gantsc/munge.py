"""MUNGE nearest-neighbour augmentation for continuous features."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, fit_scaler
from .gan import SyntheticBatch


@dataclass(frozen=True)
class MungeConfig:
    p_swap: float = 0.5
    local_variance: float = 1.0
    multiplier: int = 9
    seed: int = 0

    def __post_init__(self):
        if not 0.0 <= self.p_swap <= 1.0:
            raise ValueError("p_swap must lie in [0, 1]")
        if self.local_variance <= 0:
            raise ValueError("local_variance must be positive")
        if self.multiplier < 1:
            raise ValueError("multiplier must be >= 1")


def nearest_neighbors(Z: np.ndarray) -> np.ndarray:
    """Exact Euclidean nearest neighbour of every row, excluding itself; ties go to the lowest index."""
    n = Z.shape[0]
    nn = np.empty(n, dtype=np.intp)
    sq = (Z * Z).sum(axis=1)
    for lo in range(0, n, 1024):
        hi = min(n, lo + 1024)
        # exact differences for small blocks keep ties exact
        dist = ((Z[lo:hi, None, :] - Z[None, :, :]) ** 2).sum(-1) if n <= 4096 else \
            sq[lo:hi, None] - 2.0 * Z[lo:hi] @ Z.T + sq[None, :]
        dist[np.arange(hi - lo), np.arange(lo, hi)] = np.inf
        nn[lo:hi] = dist.argmin(axis=1)
    return nn


def munge(d: Dataset, cfg: MungeConfig) -> SyntheticBatch:
    """k passes; each pass perturbs a copy of the data towards nearest neighbours.

    For example e with neighbour e' and each feature a, with probability
    p_swap the copy of e gets N(e'_a, sd) and the copy of e' gets N(e_a, sd),
    sd = |e_a - e'_a| / local_variance, always using the original values.
    """
    if d.n < 2:
        raise ValueError("MUNGE needs at least 2 rows")
    X = d.features
    nn = nearest_neighbors(fit_scaler(X).transform(X))
    n, dim = X.shape
    passes = []
    for k in range(cfg.multiplier):
        out = X.copy()
        for i in range(n):
            rng = np.random.default_rng([cfg.seed, k, i])
            swap = rng.random(dim) < cfg.p_swap
            draws = rng.standard_normal((2, dim))
            if not swap.any():
                continue
            j = nn[i]
            sd = np.abs(X[i] - X[j]) / cfg.local_variance
            out[i, swap] = X[j, swap] + sd[swap] * draws[0, swap]
            out[j, swap] = X[i, swap] + sd[swap] * draws[1, swap]
        passes.append(out)
    return SyntheticBatch(np.vstack(passes), np.tile(d.labels, cfg.multiplier))
