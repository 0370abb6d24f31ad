import math
from dataclasses import replace

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from bhdg.graph import cosine_knn, gaussian_knn, laplacian
from bhdg.solver import (
    FeatureRanking, HyperParams, SolverDivergence, SolverState, b_argument, fit, init_state,
    l21_norm, objective, objective_terms, p_subobjective, select_top, update_B, update_B_relaxed,
    update_D, update_multiplier, update_P, update_W, update_Z, w_subobjective, write_trace,
    z_argument,
)
from bhdg.synthetic import planted_task, random_task


def _instance(seed, n=8, d=6, c=4, l=3, k=3):
    rng = np.random.default_rng(seed)
    X = rng.random((n, d))
    Y = rng.integers(0, 2, (n, c)).astype(float)
    hp = HyperParams(lambda1=0.5, lambda2=0.3, lambda3=0.2, rho0=0.7, l=l, k=k, seed=seed)
    state = init_state(X, Y, hp)
    state.W = rng.random((d, l))
    state.P = rng.random((c, l))
    state.M = rng.normal(size=(n, l))
    state.D = update_D(state.W, hp.epsilon)
    return X, Y, hp, state


def _zero_state(n, d, c, l):
    empty = laplacian(sp.csr_matrix((n, n)))
    return SolverState(W=np.zeros((d, l)), P=np.zeros((c, l)), B=np.zeros((n, l)),
                       Z=np.zeros((n, l)), M=np.zeros((n, l)), rho=1.0, D=np.ones(d),
                       S_X=sp.csr_matrix((n, n)), L_Y=empty, G_B=empty)


def naive_objective(X, Y, W, P, B, L_B, L_Y, S_X, hp):
    n, d = len(X), len(X[0])
    l = len(W[0])
    XW = [[sum(X[i][t] * W[t][j] for t in range(d)) for j in range(l)] for i in range(n)]
    YP = [[sum(Y[i][t] * P[t][j] for t in range(len(P))) for j in range(l)] for i in range(n)]
    reg = sum((XW[i][j] - B[i][j]) ** 2 for i in range(n) for j in range(l))
    hsh = sum((YP[i][j] - B[i][j]) ** 2 for i in range(n) for j in range(l))
    spa = hp.lambda1 * sum(math.sqrt(sum(v * v for v in row)) for row in W)
    dyn = hp.lambda2 * sum(XW[i][j] * L_B[i][t] * XW[t][j] for i in range(n) for t in range(n) for j in range(l))
    lab = hp.lambda3 * sum(B[i][j] * L_Y[i][t] * B[t][j] for i in range(n) for t in range(n) for j in range(l))
    inner = sum((sum(B[i][j] * B[t][j] for j in range(l)) - S_X[i][t]) ** 2 for i in range(n) for t in range(n))
    return reg + hsh + spa + dyn + lab + inner


# --------------------------------------------------------------------------
# Objective

def test_objective_all_zero():
    s = _zero_state(4, 3, 2, 2)
    hp = HyperParams(lambda1=0, lambda2=0, lambda3=0)
    assert objective(s, np.zeros((4, 3)), np.zeros((4, 2)), hp) == 0


def test_objective_l21_example():
    s = _zero_state(3, 2, 2, 2)
    s.W = np.array([[3.0, 0.0], [0.0, 4.0]])
    hp = HyperParams(lambda1=1, lambda2=0, lambda3=0)
    assert objective(s, np.zeros((3, 2)), np.zeros((3, 2)), hp) == pytest.approx(7)
    assert l21_norm(s.W) == 7


@pytest.mark.parametrize("seed", range(5))
def test_objective_matches_naive(seed):
    X, Y, hp, s = _instance(seed)
    s.B = np.random.default_rng(seed + 100).integers(0, 2, s.B.shape).astype(float)
    s.G_B = laplacian(cosine_knn(s.B, 3))
    ref = naive_objective(X.tolist(), Y.tolist(), s.W.tolist(), s.P.tolist(), s.B.tolist(),
                          s.L_B.toarray().tolist(), s.L_Y.L.toarray().tolist(),
                          s.S_X.toarray().tolist(), hp)
    assert objective(s, X, Y, hp) == pytest.approx(ref, rel=1e-10)


def test_objective_dimension_mismatch():
    X, Y, hp, s = _instance(0)
    with pytest.raises(ValueError):
        objective(s, X[:, :-1], Y, hp)


# --------------------------------------------------------------------------
# D, W, P

def test_update_D_examples():
    D = update_D(np.array([[0.0, 0.0], [3.0, 4.0]]), 1e-8)
    assert D[0] == pytest.approx(1e8)
    assert D[1] == pytest.approx(0.1)


def test_update_D_trace_identity():
    W = np.random.default_rng(0).random((7, 3))
    D = update_D(W, 1e-12)
    assert np.trace(W.T @ (D[:, None] * W)) == pytest.approx(0.5 * l21_norm(W), rel=1e-9)


def test_W_and_P_zero_fixed_points():
    X, Y, hp, s = _instance(1)
    s.W = np.zeros_like(s.W)
    s.P = np.zeros_like(s.P)
    assert np.all(update_W(s, X, hp) == 0)
    assert np.all(update_P(s, Y, hp) == 0)


def test_P_stationary_when_B_equals_YP():
    X, Y, hp, s = _instance(2)
    Y[:, 0] = 1.0  # keep Y'YP strictly positive
    s.B = Y @ s.P
    np.testing.assert_allclose(update_P(s, Y, hp), s.P, rtol=1e-7)


def test_W_ratio_one_case():
    X, Y, hp, s = _instance(3)
    hp = replace(hp, lambda1=0.0, lambda2=0.0)
    s.B = X @ s.W
    np.testing.assert_allclose(update_W(s, X, hp), s.W, rtol=1e-7)


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10_000))
def test_W_and_P_block_monotone(seed):
    rng = np.random.default_rng(seed)
    n, d, c = rng.integers(12, 40), rng.integers(3, 20), rng.integers(2, 8)
    X, Y, hp, s = _instance(seed, n=n, d=d, c=c, l=max(1, c // 2), k=5)
    hp = replace(hp, lambda1=float(rng.choice([0.01, 1, 100])), lambda2=float(rng.choice([0.01, 1, 100])))
    f = w_subobjective(s.W, X, s.B, s.G_B, s.D, hp)
    g = p_subobjective(s.P, Y, s.B)
    for _ in range(20):
        s.W = update_W(s, X, hp)
        s.P = update_P(s, Y, hp)
        f2 = w_subobjective(s.W, X, s.B, s.G_B, s.D, hp)
        g2 = p_subobjective(s.P, Y, s.B)
        assert f2 <= f + 1e-9 * abs(f)
        assert g2 <= g + 1e-9 * abs(g)
        assert np.all(s.W >= 0) and np.all(s.P >= 0)
        f, g = f2, g2


# --------------------------------------------------------------------------
# B, Z, multiplier

def _oracle_binarize(G, K):
    return (G @ np.linalg.inv(K) > 0).astype(float)


@pytest.mark.parametrize("seed", range(10))
def test_B_and_Z_match_dense_inverse(seed):
    X, Y, hp, s = _instance(seed)
    K = 2 * s.Z.T @ s.Z + s.rho * np.eye(3)
    np.testing.assert_array_equal(update_B(s, X, Y, hp), _oracle_binarize(b_argument(s, X, Y, hp), K))
    s.B = update_B(s, X, Y, hp)
    K = 2 * s.B.T @ s.B + s.rho * np.eye(3)
    np.testing.assert_array_equal(update_Z(s, hp), _oracle_binarize(z_argument(s, hp), K))


def test_B_argument_formula():
    X, Y, hp, s = _instance(4)
    ref = (2 * X @ s.W + 2 * s.S_X.toarray() @ s.Z + 2 * hp.hash_coupling * Y @ s.P
           - hp.lambda3 * s.L_Y.L.toarray() @ s.Z - s.M + (s.rho - 2) * s.Z)
    np.testing.assert_allclose(b_argument(s, X, Y, hp), ref, atol=1e-12)


def test_B_sign_extremes():
    n, l = 5, 2
    s = _zero_state(n, 3, 2, l)
    hp = HyperParams(lambda3=0)
    s.M = -np.ones((n, l))  # with everything else zero the argument is -M
    assert np.all(update_B(s, np.zeros((n, 3)), np.zeros((n, 2)), hp) == 1)
    s.M = np.ones((n, l))
    assert np.all(update_B(s, np.zeros((n, 3)), np.zeros((n, 2)), hp) == 0)


def test_Z_sign_extremes():
    n, l = 5, 2
    s = _zero_state(n, 3, 2, l)
    hp = HyperParams(lambda3=0)
    s.M = -np.ones((n, l))
    assert np.all(update_Z(s, hp) == 0)
    s.M = np.ones((n, l))
    assert np.all(update_Z(s, hp) == 1)


def test_exact_zero_argument_gives_bit_zero():
    s = _zero_state(4, 2, 2, 2)
    hp = HyperParams(lambda3=0)
    assert np.all(update_B(s, np.zeros((4, 2)), np.zeros((4, 2)), hp) == 0)


def test_multiplier_examples():
    s = _zero_state(3, 2, 2, 2)
    s.rho = 0.01
    M, rho = update_multiplier(s, HyperParams(alpha=1.0))
    assert np.all(M == 0) and rho == 0.01
    s.B[1, 0] = 1.0
    s.rho = 2.0
    M, rho = update_multiplier(s, HyperParams(alpha=0.5))
    assert M[1, 0] == 2.0 and M.sum() == 2.0 and rho == 1.0
    s.rho = 1e-6
    assert update_multiplier(s, HyperParams(alpha=0.1))[1] == 1e-6


def test_relaxed_B_stays_nonnegative():
    X, Y, hp, s = _instance(5)
    s.B = np.random.default_rng(5).random(s.B.shape)
    for _ in range(10):
        s.B = update_B_relaxed(s, X, Y, hp)
        assert np.all(s.B >= 0) and np.all(np.isfinite(s.B))


# --------------------------------------------------------------------------
# fit and ranking

def test_hyperparam_validation():
    with pytest.raises(ValueError):
        HyperParams(lambda1=-1)
    with pytest.raises(ValueError):
        HyperParams(rho0=0)
    assert HyperParams().code_length(5) == 3
    assert HyperParams(l=4).code_length(5) == 4


def test_fit_rejects_bad_input():
    X, Y = np.random.default_rng(0).random((20, 4)), np.zeros((20, 2))
    with pytest.raises(ValueError):
        fit(X - 1, Y)
    with pytest.raises(ValueError):
        fit(X, Y + 2)
    with pytest.raises(ValueError):
        fit(X, Y, variant="nope")
    with pytest.raises(ValueError):
        fit(X[:2], Y[:2], HyperParams(l=3))


@pytest.mark.parametrize("variant", ["bhdg", "bhdg1", "bhdg2"])
def test_fit_invariants_every_iteration(variant):
    ds = random_task(n=60, d=12, c=5, seed=1)
    hp = HyperParams(lambda1=1, lambda2=0.1, lambda3=1, rho0=1, max_iter=15, tol=1e-12)
    seen = []

    def check(s):
        assert np.all(s.W >= 0) and np.all(s.P >= 0) and np.all(s.D > 0)
        if variant != "bhdg2":
            assert set(np.unique(s.B)) <= {0.0, 1.0} and set(np.unique(s.Z)) <= {0.0, 1.0}
        seen.append(s.iter)

    ranking, state = fit(ds.X, ds.Y, hp, variant, callback=check)
    assert seen == list(range(1, 16))
    assert len(state.objective_trace) == 15
    assert sorted(ranking.order) == list(range(12))


def test_fit_deterministic():
    ds = random_task(n=50, d=10, c=4, seed=2)
    hp = HyperParams(max_iter=10, seed=7)
    r1, s1 = fit(ds.X, ds.Y, hp)
    r2, s2 = fit(ds.X, ds.Y, hp)
    assert s1.objective_trace == s2.objective_trace
    np.testing.assert_array_equal(r1.scores, r2.scores)


def test_duplicated_column_gets_equal_score():
    ds, planted = planted_task(n=120, d=20, seed=3)
    X = np.column_stack([ds.X, ds.X[:, planted[0]]])
    r, _ = fit(X, ds.Y, HyperParams(lambda1=1, lambda2=0.1, lambda3=1, rho0=1, max_iter=20))
    assert abs(r.scores[planted[0]] - r.scores[-1]) <= 1e-6 * max(1.0, r.scores.max())


def test_fit_stops_on_tolerance():
    ds = random_task(n=80, d=10, c=4, seed=4)
    _, s = fit(ds.X, ds.Y, HyperParams(max_iter=50, tol=1e-4))
    assert len(s.objective_trace) <= 50
    if s.converged:
        f = [s.initial_objective] + s.objective_trace
        assert abs(f[-1] - f[-2]) / f[-2] < 1e-4


def test_divergence_is_reported(monkeypatch):
    import bhdg.solver as solver
    ds = random_task(n=30, d=5, c=4, seed=0)

    def boom(state, X, hp):
        return state.W * np.inf

    monkeypatch.setattr(solver, "update_W", boom)
    with pytest.raises((SolverDivergence, FloatingPointError)) as exc:
        fit(ds.X, ds.Y, HyperParams(max_iter=3))
    if isinstance(exc.value, SolverDivergence):
        assert exc.value.iteration == 1


def test_select_top_examples():
    r = FeatureRanking.from_scores(np.linspace(1, 0, 100))
    assert select_top(r, 0.2) == list(range(20))
    flat = FeatureRanking.from_scores(np.ones(10))
    assert select_top(flat, 3) == [0, 1, 2]
    s = np.random.default_rng(0).random(30)
    assert select_top(FeatureRanking.from_scores(s), 0.3) == select_top(FeatureRanking.from_scores(7.5 * s), 0.3)
    with pytest.raises(ValueError):
        select_top(r, 0)
    with pytest.raises(ValueError):
        select_top(r, 1.5)
    with pytest.raises(ValueError):
        select_top(r, 101)


def test_trace_csv(tmp_path):
    ds = random_task(n=40, d=8, c=4, seed=0)
    _, s = fit(ds.X, ds.Y, HyperParams(max_iter=4, tol=1e-12))
    write_trace(s, tmp_path / "t.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == ("iter,objective,regression,hashing,sparsity,dynamic_graph,"
                        "label_graph,inner_product,b_minus_z,rho")
    assert len(lines) == 5
    row = lines[1].split(",")
    assert float(row[1]) == s.objective_trace[0]
    terms = objective_terms(s, ds.X, ds.Y, HyperParams(max_iter=4))
    assert float(lines[-1].split(",")[1]) == pytest.approx(sum(terms.values()))
