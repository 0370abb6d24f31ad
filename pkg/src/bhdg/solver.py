"""Binary-hashing, dynamic-graph feature selection solver.

The model learns a nonnegative feature weight matrix ``W`` (d x l) that maps
the data onto binary pseudo-labels ``B`` (n x l). ``B`` is tied to the real
labels through a nonnegative projection ``P`` (c x l), to the data through an
inner-product term against the kNN similarity ``S_X``, and to label-space
structure through the Laplacian ``L_Y``. A cosine kNN graph over the rows of
``B`` is rebuilt every iteration and regularises the projected data ``XW``.

Minimised objective::

    ||XW - B||^2 + ||YP - B||^2 + lambda1 ||W||_{2,1}
        + lambda2 tr(W'X' L_B X W) + lambda3 tr(B' L_Y B) + ||BB' - S_X||^2

``W`` and ``P`` use multiplicative updates; ``B`` is optimised discretely with
an augmented Lagrangian splitting ``B = Z`` (multiplier ``M``, penalty
``rho``). Feature scores are the row norms of ``W``.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .graph import Laplacian, cosine_knn, gaussian_knn, laplacian

VARIANTS = ("bhdg", "bhdg1", "bhdg2")
TERM_NAMES = ("regression", "hashing", "sparsity", "dynamic_graph", "label_graph", "inner_product")


class SolverDivergence(RuntimeError):
    """Raised when the objective stops being finite."""

    def __init__(self, iteration, terms):
        self.iteration = iteration
        self.terms = dict(terms)
        detail = ", ".join(f"{k}={v:.6g}" for k, v in self.terms.items())
        super().__init__(f"objective became non-finite at iteration {iteration} ({detail})")


@dataclass(frozen=True)
class HyperParams:
    """Model and optimiser settings.

    Defaults are the recommended setting lambda = (1000, 10, 1000),
    rho = 0.01, alpha = 1 with 10-NN graphs and a unit-width Gaussian kernel.
    ``l=None`` means half the label count, rounded up.
    """

    lambda1: float = 1000.0
    lambda2: float = 10.0
    lambda3: float = 1000.0
    rho0: float = 0.01
    alpha: float = 1.0
    l: int | None = None
    k: int = 10
    sigma: float = 1.0
    epsilon: float = 1e-8
    max_iter: int = 50
    tol: float = 1e-4
    seed: int = 0
    hash_coupling: float = 1.0
    rho_floor: float = 1e-6

    def __post_init__(self):
        for name in ("lambda1", "lambda2", "lambda3", "hash_coupling"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        for name in ("rho0", "alpha", "sigma", "epsilon", "tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.l is not None and self.l < 1:
            raise ValueError("l must be a positive integer")
        if self.k < 1 or self.max_iter < 1:
            raise ValueError("k and max_iter must be positive")

    def code_length(self, c):
        return self.l if self.l is not None else max(1, math.ceil(c / 2))


@dataclass
class SolverState:
    W: np.ndarray
    P: np.ndarray
    B: np.ndarray
    Z: np.ndarray
    M: np.ndarray
    rho: float
    D: np.ndarray  # diagonal of D, length d
    S_X: sp.csr_matrix
    L_Y: Laplacian
    G_B: Laplacian  # current dynamic graph of B: L, A, S
    iter: int = 0
    objective_trace: list = field(default_factory=list)
    trace: list = field(default_factory=list)
    initial_objective: float = float("nan")
    converged: bool = False
    variant: str = "bhdg"

    @property
    def L_B(self):
        return self.G_B.L

    @property
    def S_B(self):
        return self.G_B.S

    @property
    def A_B(self):
        return self.G_B.A


@dataclass(frozen=True)
class FeatureRanking:
    scores: np.ndarray
    order: np.ndarray

    @classmethod
    def from_scores(cls, scores):
        scores = np.asarray(scores, dtype=float)
        return cls(scores=scores, order=np.argsort(-scores, kind="stable"))


# --------------------------------------------------------------------------
# Objective

def l21_norm(W):
    return float(np.sqrt((W * W).sum(axis=1)).sum())


def inner_product_term(B, S_X):
    """``||B B' - S_X||_F^2`` without forming the n x n product."""
    G = B.T @ B
    coo = S_X.tocoo()
    cross = np.einsum("ij,ij->i", B[coo.row], B[coo.col]) @ coo.data
    return float((G * G).sum() - 2.0 * cross + (coo.data ** 2).sum())


def objective_terms(state, X, Y, hp):
    if X.shape[0] != state.B.shape[0] or Y.shape[0] != state.B.shape[0]:
        raise ValueError("X, Y and B must have the same number of rows")
    if X.shape[1] != state.W.shape[0] or Y.shape[1] != state.P.shape[0]:
        raise ValueError("W or P does not match the data dimensions")
    B = state.B
    XW = X @ state.W
    return {
        "regression": float(((XW - B) ** 2).sum()),
        "hashing": float(((Y @ state.P - B) ** 2).sum()),
        "sparsity": hp.lambda1 * l21_norm(state.W),
        "dynamic_graph": hp.lambda2 * float((XW * (state.L_B @ XW)).sum()),
        "label_graph": hp.lambda3 * float((B * (state.L_Y.L @ B)).sum()),
        "inner_product": inner_product_term(B, state.S_X),
    }


def objective(state, X, Y, hp):
    return sum(objective_terms(state, X, Y, hp).values())


def w_subobjective(W, X, B, G_B, D, hp):
    """W block of the objective with B, L_B and D held fixed (D in quadratic form)."""
    XW = X @ W
    return float(((XW - B) ** 2).sum()
                 + hp.lambda2 * (XW * (G_B.L @ XW)).sum()
                 + hp.lambda1 * (D[:, None] * W * W).sum())


def p_subobjective(P, Y, B):
    return float(((Y @ P - B) ** 2).sum())


# --------------------------------------------------------------------------
# Block updates

def update_D(W, epsilon=1e-8):
    return 1.0 / (2.0 * np.sqrt((W * W).sum(axis=1)) + epsilon)


def update_W(state, X, hp):
    W = state.W
    XW = X @ W
    num = X.T @ state.B
    den = X.T @ XW + hp.lambda1 * state.D[:, None] * W
    if hp.lambda2:
        num = num + hp.lambda2 * (X.T @ (state.S_B @ XW))
        den = den + hp.lambda2 * (X.T @ (state.G_B.degrees[:, None] * XW))
    return W * num / (den + hp.epsilon)


def update_P(state, Y, hp):
    P = state.P
    return P * (Y.T @ state.B) / (Y.T @ (Y @ P) + hp.epsilon)


def _binarize(H):
    # sgn(0) counts as -1, so exact zeros give bit 0
    return (H > 0).astype(float)


def _right_solve(G, K):
    """``G K^{-1}`` for symmetric positive definite ``K``."""
    return sla.solve(K, G.T, assume_a="pos").T


def b_argument(state, X, Y, hp):
    Z = state.Z
    return (2.0 * (X @ state.W)
            + 2.0 * (state.S_X @ Z)
            + 2.0 * hp.hash_coupling * (Y @ state.P)
            - hp.lambda3 * (state.L_Y.L @ Z)
            - state.M
            + (state.rho - 2.0) * Z)


def update_B(state, X, Y, hp):
    G = b_argument(state, X, Y, hp)
    l = G.shape[1]
    K = 2.0 * (state.Z.T @ state.Z) + state.rho * np.eye(l)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(K))):
        raise FloatingPointError("non-finite input to the B update")
    return _binarize(_right_solve(G, K))


def z_argument(state, hp):
    B = state.B
    return (2.0 * (state.S_X.T @ B)
            - hp.lambda3 * (state.L_Y.L @ B)
            + (state.rho + 2.0) * B
            + state.M)


def update_Z(state, hp):
    G = z_argument(state, hp)
    l = G.shape[1]
    K = 2.0 * (state.B.T @ state.B) + state.rho * np.eye(l)
    if not (np.all(np.isfinite(G)) and np.all(np.isfinite(K))):
        raise FloatingPointError("non-finite input to the Z update")
    return _binarize(_right_solve(G, K))


def update_multiplier(state, hp):
    M = state.M + state.rho * (state.B - state.Z)
    rho = max(hp.alpha * state.rho, hp.rho_floor)
    return M, rho


def update_B_relaxed(state, X, Y, hp):
    """Nonnegative multiplicative B step used when the binary constraint is dropped.

    Splits the gradient of the B block into positive and negative parts
    (``L_Y = A_Y - S_Y``) and applies ``B <- B * neg / pos``.
    """
    B = state.B
    L_Y = state.L_Y
    num = (2.0 * (state.S_X @ B) + X @ state.W
           + hp.hash_coupling * (Y @ state.P) + hp.lambda3 * (L_Y.S @ B))
    den = 2.0 * (B @ (B.T @ B)) + 2.0 * B + hp.lambda3 * (L_Y.degrees[:, None] * B)
    return B * num / (den + hp.epsilon)


# --------------------------------------------------------------------------
# Driver

def init_state(X, Y, hp, variant="bhdg"):
    """Build the fixed graphs and a seeded random starting point."""
    n, d = X.shape
    c = Y.shape[1]
    l = hp.code_length(c)
    if l > n:
        raise ValueError(f"code length {l} exceeds the number of instances {n}")
    rng = np.random.default_rng(hp.seed)
    # One shared random row for all features: identical columns of X stay tied.
    W = 0.01 * np.tile(rng.random(l), (d, 1))
    P = 0.01 * rng.random((c, l))
    B = rng.integers(0, 2, size=(n, l)).astype(float)
    Z = rng.integers(0, 2, size=(n, l)).astype(float)
    if variant == "bhdg2":
        B = rng.random((n, l))
    k = min(hp.k, n - 1)
    S_X = gaussian_knn(X, k, hp.sigma).S
    L_Y = laplacian(gaussian_knn(Y, k, hp.sigma))
    G_B = laplacian(cosine_knn(B, k))
    return SolverState(
        W=W, P=P, B=B, Z=Z, M=np.zeros((n, l)), rho=float(hp.rho0),
        D=update_D(W, hp.epsilon), S_X=S_X, L_Y=L_Y, G_B=G_B, variant=variant,
    )


def _check_inputs(X, Y):
    X = np.asarray(X, dtype=float)
    Y = np.asarray(Y, dtype=float)
    if X.ndim != 2 or Y.ndim != 2 or X.shape[0] != Y.shape[0]:
        raise ValueError("X and Y must be 2-d with the same number of rows")
    if not np.all(np.isfinite(X)):
        raise ValueError("X contains NaN or Inf")
    if np.any(X < 0):
        raise ValueError("X must be nonnegative for the multiplicative updates; "
                         "min-max scale it first")
    if not np.all((Y == 0) | (Y == 1)):
        raise ValueError("Y must be binary")
    return X, Y


def step(state, X, Y, hp, variant="bhdg"):
    """One outer iteration, in place. Returns the new objective terms."""
    state.D = update_D(state.W, hp.epsilon)
    state.W = update_W(state, X, hp)
    state.P = update_P(state, Y, hp)
    if variant == "bhdg2":
        state.B = update_B_relaxed(state, X, Y, hp)
    else:
        state.B = update_B(state, X, Y, hp)
        state.Z = update_Z(state, hp)
        state.M, state.rho = update_multiplier(state, hp)
    if variant != "bhdg1":
        state.G_B = laplacian(cosine_knn(state.B, min(hp.k, X.shape[0] - 1)))
    state.iter += 1
    return objective_terms(state, X, Y, hp)


def fit(X, Y, hp=None, variant="bhdg", callback=None):
    """Run the alternating optimisation and rank features.

    Stops when the relative objective change drops below ``hp.tol`` or after
    ``hp.max_iter`` iterations. ``callback(state)`` is called after every
    iteration. Returns ``(FeatureRanking, SolverState)``.
    """
    hp = hp or HyperParams()
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}; expected one of {VARIANTS}")
    if variant == "bhdg1":
        hp = replace(hp, lambda2=0.0)
    X, Y = _check_inputs(X, Y)
    state = init_state(X, Y, hp, variant)
    prev = objective(state, X, Y, hp)
    state.initial_objective = prev
    for _ in range(hp.max_iter):
        terms = step(state, X, Y, hp, variant)
        f = sum(terms.values())
        if not math.isfinite(f):
            raise SolverDivergence(state.iter, terms)
        state.objective_trace.append(f)
        state.trace.append({
            "iter": state.iter, "objective": f, **terms,
            "b_minus_z": float(np.linalg.norm(state.B - state.Z)) if variant != "bhdg2" else float("nan"),
            "rho": state.rho,
        })
        if callback is not None:
            callback(state)
        if abs(f - prev) / max(prev, 1e-12) < hp.tol:
            state.converged = True
            break
        prev = f
    ranking = FeatureRanking.from_scores(np.sqrt((state.W * state.W).sum(axis=1)))
    return ranking, state


def select_top(ranking, fraction_or_count):
    """Indices of the best features.

    A float in (0, 1] is a fraction of ``d`` (rounded up); an int is a count.
    """
    d = len(ranking.scores)
    if isinstance(fraction_or_count, (int, np.integer)) and not isinstance(fraction_or_count, bool):
        count = int(fraction_or_count)
    else:
        frac = float(fraction_or_count)
        if not 0.0 < frac <= 1.0:
            raise ValueError(f"fraction must lie in (0, 1], got {frac}")
        # guard against 0.2 * 100 = 20.000000000000004
        count = math.ceil(round(frac * d, 9))
    if not 0 < count <= d:
        raise ValueError(f"cannot select {count} of {d} features")
    return [int(i) for i in ranking.order[:count]]


def write_trace(state, path):
    cols = ["iter", "objective", *TERM_NAMES, "b_minus_z", "rho"]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=cols)
        w.writeheader()
        for row in state.trace:
            w.writerow({k: (repr(float(v)) if isinstance(v, float) else v) for k, v in row.items()})
