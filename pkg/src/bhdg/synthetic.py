"""Synthetic multi-label tasks with known relevant features."""
from __future__ import annotations

import numpy as np

from .ingest import Dataset


def planted_task(n=300, d=50, c=6, n_planted=5, noise=0.1, seed=0):
    """Labels driven by a sparse linear map of a few planted features.

    Features are Uniform(0, 1). Each label thresholds a random nonnegative
    combination of the planted columns at its median, then a ``noise``
    fraction of label entries is flipped. Returns ``(Dataset, planted)``.
    """
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    planted = np.sort(rng.choice(d, size=n_planted, replace=False))
    A = rng.random((n_planted, c)) * (rng.random((n_planted, c)) < 0.6)
    # every label and every planted feature gets at least one link
    A[rng.integers(0, n_planted, size=c), np.arange(c)] += 0.5 + rng.random(c)
    A[np.arange(n_planted), rng.integers(0, c, size=n_planted)] += 0.5 + rng.random(n_planted)
    score = X[:, planted] @ A
    Y = (score > np.median(score, axis=0)).astype(np.int8)
    flip = rng.random(Y.shape) < noise
    Y[flip] = 1 - Y[flip]
    return Dataset(f"planted-{seed}", X, Y), [int(i) for i in planted]


def random_task(n=200, d=50, c=8, density=0.3, seed=0):
    """Unstructured data: Uniform(0, 1) features, Bernoulli labels."""
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    Y = (rng.random((n, c)) < density).astype(np.int8)
    return Dataset(f"random-{seed}", X, Y)
