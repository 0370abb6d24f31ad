"""Six multi-label evaluation metrics.

Ranking-based metrics order labels by descending score with ties broken
toward the lower label index. Instances without any positive label are
skipped by ranking loss, one-error, coverage and average precision. Coverage
is unnormalised and 0-based.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

METRIC_NAMES = ("hl", "rl", "oe", "cv", "ap", "macro_f1")
HIGHER_IS_BETTER = {"hl": False, "rl": False, "oe": False, "cv": False, "ap": True, "macro_f1": True}


@dataclass(frozen=True)
class MetricReport:
    hl: float
    rl: float
    oe: float
    cv: float
    ap: float
    macro_f1: float

    def as_dict(self):
        return asdict(self)


def _mean(values):
    return float(np.mean(values)) if len(values) else 0.0


def hamming_loss(hard, Y):
    return float(np.mean(hard != Y))


def label_positions(ranks):
    """0-based position of every label in its row's descending ordering."""
    order = np.argsort(-ranks, axis=1, kind="stable")
    pos = np.empty_like(order)
    np.put_along_axis(pos, order, np.arange(ranks.shape[1])[None, :], axis=1)
    return pos


def ranking_loss(ranks, Y):
    """Fraction of (positive, negative) pairs where the negative scores at least as high."""
    out = []
    for r, y in zip(ranks, Y):
        pos, neg = r[y == 1], r[y == 0]
        if len(pos) and len(neg):
            out.append(np.mean(neg[None, :] >= pos[:, None]))
    return _mean(out)


def one_error(ranks, Y):
    keep = Y.sum(axis=1) > 0
    top = np.argmax(ranks[keep], axis=1)
    return _mean(Y[keep][np.arange(keep.sum()), top] == 0)


def coverage(ranks, Y):
    keep = Y.sum(axis=1) > 0
    pos = label_positions(ranks[keep])
    return _mean(np.where(Y[keep] == 1, pos, -1).max(axis=1))


def average_precision(ranks, Y):
    keep = Y.sum(axis=1) > 0
    out = []
    for p, y in zip(label_positions(ranks[keep]), Y[keep]):
        rel = np.sort(p[y == 1]) + 1  # 1-based positions of positives
        out.append(np.mean(np.arange(1, len(rel) + 1) / rel))
    return _mean(out)


def macro_f1(hard, Y):
    tp = ((hard == 1) & (Y == 1)).sum(axis=0)
    fp = ((hard == 1) & (Y == 0)).sum(axis=0)
    fn = ((hard == 0) & (Y == 1)).sum(axis=0)
    denom = 2 * tp + fp + fn
    f1 = np.where(denom == 0, 1.0, 2 * tp / np.maximum(denom, 1))
    return float(f1.mean())


def evaluate(hard, ranks, Y_true):
    hard = np.asarray(hard)
    ranks = np.asarray(ranks, dtype=float)
    Y = np.asarray(Y_true)
    if not (hard.shape == ranks.shape == Y.shape) or Y.ndim != 2:
        raise ValueError(f"shape mismatch: hard {hard.shape}, ranks {ranks.shape}, Y {Y.shape}")
    if not np.all(np.isfinite(ranks)):
        raise ValueError("ranks contain NaN or Inf")
    return MetricReport(
        hl=hamming_loss(hard, Y),
        rl=ranking_loss(ranks, Y),
        oe=one_error(ranks, Y),
        cv=coverage(ranks, Y),
        ap=average_precision(ranks, Y),
        macro_f1=macro_f1(hard, Y),
    )
