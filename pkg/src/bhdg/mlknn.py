"""ML-KNN multi-label classifier (Zhang & Zhou, 2007).

Neighbours use Euclidean distance with ties resolved toward the lower
training index. During training each instance is excluded from its own
neighbourhood.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_BLOCK_FLOATS = 4_000_000


@dataclass(frozen=True)
class MLKnnModel:
    k: int
    s: float
    priors: np.ndarray      # (c,) P(H1)
    cond1: np.ndarray       # (c, k+1) P(E_j | H1)
    cond0: np.ndarray       # (c, k+1) P(E_j | H0)
    counts1: np.ndarray     # (c, k+1) raw counts behind cond1
    counts0: np.ndarray
    train_X: np.ndarray
    train_Y: np.ndarray


def _sq_dist(A, B):
    diff = A[:, None, :] - B[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def knn_indices(query, ref, k, exclude_self=False):
    """Indices of the ``k`` nearest rows of ``ref`` for every row of ``query``."""
    m = query.shape[0]
    out = np.empty((m, k), dtype=np.intp)
    step = max(1, _BLOCK_FLOATS // max(1, ref.shape[0] * max(1, ref.shape[1])))
    for start in range(0, m, step):
        stop = min(m, start + step)
        dist = _sq_dist(query[start:stop], ref)
        if exclude_self:
            idx = np.arange(start, stop)
            dist[idx - start, idx] = np.inf
        out[start:stop] = np.argsort(dist, axis=1, kind="stable")[:, :k]
    return out


def train(X, Y, k=10, s=1.0):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y).astype(np.int64)
    n, c = Y.shape
    if X.shape[0] != n:
        raise ValueError("X and Y row counts differ")
    if n <= k:
        raise ValueError(f"ML-KNN needs more than k={k} training instances, got {n}")
    priors = (s + Y.sum(axis=0)) / (2 * s + n)
    nbrs = knn_indices(X, X, k, exclude_self=True)
    votes = Y[nbrs].sum(axis=1)  # (n, c) positive neighbours per label
    counts1 = np.zeros((c, k + 1))
    counts0 = np.zeros((c, k + 1))
    labels = np.broadcast_to(np.arange(c), (n, c))
    np.add.at(counts1, (labels[Y == 1], votes[Y == 1]), 1)
    np.add.at(counts0, (labels[Y == 0], votes[Y == 0]), 1)
    cond1 = (s + counts1) / (s * (k + 1) + counts1.sum(axis=1, keepdims=True))
    cond0 = (s + counts0) / (s * (k + 1) + counts0.sum(axis=1, keepdims=True))
    return MLKnnModel(k, float(s), priors, cond1, cond0, counts1, counts0, X, Y)


def predict(model, X):
    """Return ``(hard, ranks)``; ``ranks`` holds the posteriors P(H1 | E)."""
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != model.train_X.shape[1]:
        raise ValueError(f"expected {model.train_X.shape[1]} features, got {X.shape[-1]}")
    nbrs = knn_indices(X, model.train_X, model.k)
    votes = model.train_Y[nbrs].sum(axis=1)
    cols = np.arange(votes.shape[1])
    p1 = model.priors * model.cond1[cols, votes]
    p0 = (1.0 - model.priors) * model.cond0[cols, votes]
    ranks = p1 / (p1 + p0)
    hard = (p1 > p0).astype(np.int8)
    return hard, ranks
