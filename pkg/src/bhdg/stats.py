"""Friedman test and Nemenyi critical difference over method/dataset tables."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

# Two-tailed Nemenyi critical values q_alpha (studentized range / sqrt 2,
# infinite degrees of freedom), indexed by the number of methods K.
NEMENYI_Q = {
    0.05: {
        2: 1.960, 3: 2.343, 4: 2.569, 5: 2.728, 6: 2.850, 7: 2.949, 8: 3.031,
        9: 3.102, 10: 3.164, 11: 3.219, 12: 3.268, 13: 3.313, 14: 3.354,
        15: 3.391, 16: 3.426, 17: 3.458, 18: 3.489, 19: 3.517, 20: 3.544,
    },
    0.10: {
        2: 1.645, 3: 2.052, 4: 2.291, 5: 2.459, 6: 2.589, 7: 2.693, 8: 2.780,
        9: 2.855, 10: 2.920, 11: 2.978, 12: 3.030, 13: 3.077, 14: 3.120,
        15: 3.159, 16: 3.196, 17: 3.230, 18: 3.261, 19: 3.291, 20: 3.319,
    },
}


@dataclass
class RankTable:
    methods: list
    datasets: list
    values: np.ndarray  # (N datasets, K methods)
    higher_is_better: bool = False

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (len(self.datasets), len(self.methods)):
            raise ValueError(f"values shape {self.values.shape} does not match "
                             f"{len(self.datasets)} datasets x {len(self.methods)} methods")


def rank_rows(t):
    """Per-dataset ranks, 1 = best, ties sharing the mean rank."""
    if np.isnan(t.values).any():
        raise ValueError("rank table contains NaN")
    keyed = -t.values if t.higher_is_better else t.values
    return rankdata(keyed, method="average", axis=1)


def average_ranks(t):
    return rank_rows(t).mean(axis=0)


def friedman(avg_ranks, N):
    """Friedman chi-square and the Iman-Davenport F statistic from average ranks."""
    R = np.asarray(avg_ranks, dtype=float)
    K = len(R)
    if K < 2 or N < 2:
        raise ValueError("need at least two methods and two datasets")
    chi2 = 12.0 * N / (K * (K + 1)) * ((R ** 2).sum() - K * (K + 1) ** 2 / 4.0)
    denom = N * (K - 1) - chi2
    if denom <= 0:
        raise ZeroDivisionError(f"chi2={chi2:.6g} reaches N(K-1)={N * (K - 1)}; F_F undefined")
    return float(chi2), float((N - 1) * chi2 / denom)


def nemenyi_cd(K, N, alpha=0.05):
    table = NEMENYI_Q.get(alpha)
    if table is None:
        raise ValueError(f"no Nemenyi table for alpha={alpha}; have {sorted(NEMENYI_Q)}")
    if K not in table:
        raise ValueError(f"K={K} outside the tabulated range 2..20")
    return table[K] * math.sqrt(K * (K + 1) / (6.0 * N))


def write_cd_data(path, methods, avg_ranks, cd):
    """CSV with one row per method: name, average rank and the critical difference."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["method", "avg_rank", "cd"])
        for m, r in sorted(zip(methods, avg_ranks), key=lambda mr: mr[1]):
            w.writerow([m, repr(float(r)), repr(float(cd))])
