"""kNN similarity graphs and their Laplacians.

Graphs are built with an OR rule: ``i`` and ``j`` are joined when either is
among the other's ``k`` nearest neighbours. Self-loops are excluded and ties
in the neighbour ordering go to the lower row index, so construction is
deterministic.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

# Upper bound on floats materialised per distance block.
_BLOCK_FLOATS = 4_000_000


@dataclass(frozen=True)
class SimilarityGraph:
    S: sp.csr_matrix
    k: int
    kernel: str
    sigma: float | None = None
    neighbors: np.ndarray | None = None  # (m, k) base neighbour lists

    @property
    def m(self):
        return self.S.shape[0]


@dataclass(frozen=True)
class Laplacian:
    L: sp.csr_matrix
    A: sp.dia_matrix
    S: sp.csr_matrix

    @property
    def degrees(self):
        return self.A.diagonal()


def _check_k(m, k):
    if m < 2:
        raise ValueError(f"need at least 2 rows to build a graph, got {m}")
    if not 1 <= k <= m - 1:
        raise ValueError(f"k must lie in [1, {m - 1}] for {m} rows, got {k}")


def _row_blocks(m, width):
    step = max(1, _BLOCK_FLOATS // max(1, m * width))
    for start in range(0, m, step):
        yield start, min(m, start + step)


def _assemble(m, nbrs, vals):
    rows = np.repeat(np.arange(m), nbrs.shape[1])
    base = sp.csr_matrix((vals.ravel(), (rows, nbrs.ravel())), shape=(m, m))
    S = base.maximum(base.T).tocsr()
    S.setdiag(0.0)
    S.eliminate_zeros()
    S.sort_indices()
    return S


def squared_distances(rows, start, stop):
    """Exact squared Euclidean distances from rows[start:stop] to all rows."""
    diff = rows[start:stop, None, :] - rows[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def gaussian_knn(rows, k=10, sigma=1.0):
    """Gaussian-kernel kNN graph, ``S_ij = exp(-||r_i - r_j||^2 / sigma)``."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ValueError("rows must be a 2-d array")
    m = rows.shape[0]
    _check_k(m, k)
    if not sigma > 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    nbrs = np.empty((m, k), dtype=np.intp)
    vals = np.empty((m, k))
    for start, stop in _row_blocks(m, rows.shape[1]):
        dist = squared_distances(rows, start, stop)
        idx = np.arange(start, stop)
        dist[idx - start, idx] = np.inf
        order = np.argsort(dist, axis=1, kind="stable")[:, :k]
        nbrs[start:stop] = order
        vals[start:stop] = np.exp(-np.take_along_axis(dist, order, axis=1) / sigma)
    return SimilarityGraph(_assemble(m, nbrs, vals), k, "gaussian", float(sigma), nbrs)


def cosine_matrix(rows):
    """Dense pairwise cosine similarity; zero-norm rows give 0 everywhere."""
    rows = np.asarray(rows, dtype=float)
    norms = np.sqrt(np.einsum("ij,ij->i", rows, rows))
    safe = np.where(norms > 0, norms, 1.0)
    unit = rows / safe[:, None]
    C = unit @ unit.T
    C = np.minimum(C, C.T)  # gemm is not bitwise symmetric
    C[norms == 0, :] = 0.0
    C[:, norms == 0] = 0.0
    return np.clip(C, -1.0, 1.0)


def cosine_knn(rows, k=10):
    """Cosine-similarity kNN graph; neighbours ranked by descending cosine."""
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2:
        raise ValueError("rows must be a 2-d array")
    m = rows.shape[0]
    _check_k(m, k)
    C = cosine_matrix(rows)
    np.fill_diagonal(C, -np.inf)
    nbrs = np.argsort(-C, axis=1, kind="stable")[:, :k]
    vals = np.take_along_axis(C, nbrs, axis=1)
    vals = np.maximum(vals, 0.0)
    return SimilarityGraph(_assemble(m, nbrs, vals), k, "cosine", None, nbrs)


def laplacian(g):
    S = g.S if isinstance(g, SimilarityGraph) else sp.csr_matrix(g)
    deg = np.asarray(S.sum(axis=1)).ravel()
    A = sp.diags(deg, format="dia")
    L = (sp.diags(deg) - S).tocsr()
    return Laplacian(L=L, A=A, S=S)


def dump_coo(g, path):
    """Write the nonzeros of ``S`` as ``i j value`` lines, both triangles, row-major."""
    S = (g.S if isinstance(g, SimilarityGraph) else sp.csr_matrix(g)).tocoo()
    order = np.lexsort((S.col, S.row))
    with open(path, "w", encoding="utf-8") as fh:
        for t in order:
            fh.write(f"{S.row[t]} {S.col[t]} {float(S.data[t])!r}\n")
