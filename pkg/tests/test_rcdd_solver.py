import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dirlap.errors import BadCertificate, BadParameter, NotConnected, NotStrictlyRCDD
from dirlap.graph_core import (SparseMatrix, alpha_rcdd, from_edge_list, is_eulerian,
                               is_z_matrix)
from dirlap.oracles import dense_pinv
from dirlap.rcdd_solver import (double_cover, rcdd_embedding, rcdd_system, solve_alpha_rcdd,
                                solve_dd, solve_lap_pinv, solve_rcdd_general, solve_rcdd_z)
from dirlap.sdd_solver import solve_sdd

from graphs import random_digraph, random_rcdd_mixed, random_rcdd_z, random_undirected

CYCLE3 = from_edge_list([(0, 1, 1), (1, 2, 1), (2, 0, 1)], 3)
A2 = SparseMatrix([[2, -1], [-1, 2]])


def h_norm(A, v):
    H = 0.5 * (A + A.T)
    return math.sqrt(max(v @ H @ v, 0.0))


def test_rcdd_z_two_by_two():
    x, _ = solve_rcdd_z(A2, np.array([1.0, -1.0]))
    assert np.allclose(x, [1 / 3, -1 / 3], atol=1e-8)


def test_rcdd_z_diagonal():
    x, _ = solve_rcdd_z(SparseMatrix(np.diag([3.0, 5.0])), np.array([3.0, 5.0]))
    assert np.allclose(x, [1, 1], atol=1e-8)


def test_rcdd_z_random():
    A = random_rcdd_z(20, np.random.default_rng(0), alpha=1.0)
    b = np.random.default_rng(1).standard_normal(20)
    eps = 1e-8
    x, _ = solve_rcdd_z(SparseMatrix(A), b, eps)
    exact = np.linalg.solve(A, b)
    Hinv = np.linalg.inv(0.5 * (A + A.T))
    assert h_norm(A, x - exact) <= eps * math.sqrt(b @ Hinv @ b)


def test_rcdd_z_rejects_tight():
    with pytest.raises(NotStrictlyRCDD):
        solve_rcdd_z(CYCLE3.mat, np.ones(3))


def test_rcdd_z_routes_general():
    x, rep = solve_rcdd_z(SparseMatrix([[2, 1], [1, 2]]), np.array([3.0, 3.0]))
    assert rep.method == "rcdd-general" and np.allclose(x, [1, 1], atol=1e-7)


def test_alpha_rcdd_cases():
    x, rep = solve_alpha_rcdd(A2, np.array([1.0, -1.0]), 1.0)
    x0, _ = solve_rcdd_z(A2, np.array([1.0, -1.0]))
    assert np.allclose(x, x0, atol=1e-12)
    # D = diag(A)/(1 + alpha) = I here, so the bound is eps * ||b||_2
    assert rep.extra["d_norm_bound"] == pytest.approx(1e-8 * math.sqrt(2))
    x, rep = solve_alpha_rcdd(A2, np.zeros(2), 1.0)
    assert np.array_equal(x, np.zeros(2)) and rep.iterations == 0
    with pytest.raises(BadCertificate):
        solve_alpha_rcdd(A2, np.ones(2), 1.5)


def test_alpha_rcdd_d_norm():
    A = random_rcdd_z(30, np.random.default_rng(5), alpha=0.1)
    b = np.random.default_rng(6).standard_normal(30)
    eps = 1e-6
    x, rep = solve_alpha_rcdd(SparseMatrix(A), b, 0.1, eps)
    D = np.diag(A) / 1.1
    e = x - np.linalg.solve(A, b)
    assert math.sqrt(e @ (D * e)) <= (eps / 0.1) * math.sqrt(b @ (b / D))


def test_rcdd_general_positive_offdiag():
    x, _ = solve_rcdd_general(SparseMatrix([[2, 1], [1, 2]]), np.array([3.0, 3.0]), 1e-8)
    assert np.allclose(x, [1, 1], atol=1e-7)


def test_rcdd_general_dispatch_consistent():
    A = SparseMatrix(random_rcdd_z(10, np.random.default_rng(2), alpha=0.3))
    b = np.arange(10.0)
    x1, _ = solve_rcdd_general(A, b, 1e-8)
    x2, _ = solve_rcdd_z(A, b, 1e-10)
    assert np.linalg.norm(x1 - x2) <= 2e-8 * np.linalg.norm(x2)


@pytest.mark.parametrize("seed", range(3))
def test_rcdd_general_mixed(seed):
    A = random_rcdd_mixed(20, np.random.default_rng(seed), alpha=0.05)
    b = np.random.default_rng(seed + 10).standard_normal(20)
    eps = 1e-8
    x, _ = solve_rcdd_general(SparseMatrix(A), b, eps)
    exact = np.linalg.solve(A, b)
    assert np.linalg.norm(x - exact) <= eps * np.linalg.norm(exact)


def test_rcdd_general_not_rcdd():
    with pytest.raises(BadParameter):
        solve_rcdd_general(SparseMatrix([[1, 2], [2, 1]]), np.ones(2))


@settings(max_examples=20)
@given(st.integers(1, 12), st.integers(0, 10 ** 6), st.floats(0.01, 2.0))
def test_embedding_inverse(n, seed, alpha):
    A = random_rcdd_z(n, np.random.default_rng(seed), alpha)
    L = rcdd_embedding(SparseMatrix(A))
    assert is_eulerian(L)
    C = np.vstack([np.eye(n), -np.ones((1, n))])
    assert np.allclose(C @ A @ C.T, L.toarray(), atol=1e-12)
    G = C.T @ dense_pinv(L) @ C
    assert np.linalg.norm(G - np.linalg.inv(A)) <= 1e-8 * max(1.0, np.linalg.norm(G))


@given(st.integers(1, 10), st.integers(0, 10 ** 6), st.floats(0.01, 1.0))
def test_double_cover_is_rcdd_z(n, seed, alpha):
    A = random_rcdd_mixed(n, np.random.default_rng(seed), alpha)
    Z = double_cover(SparseMatrix(A))
    assert is_z_matrix(Z)
    assert alpha_rcdd(Z) >= alpha_rcdd(SparseMatrix(A)) - 1e-12
    # Z [x; -x] = [A x; -A x]
    x = np.random.default_rng(seed).standard_normal(n)
    assert np.allclose(Z @ np.concatenate([x, -x]), np.concatenate([A @ x, -A @ x]))


@given(st.integers(1, 10), st.integers(0, 10 ** 6), st.floats(0.01, 1.0))
def test_cdd_inverse_bound(n, seed, alpha):
    rng = np.random.default_rng(seed)
    A = random_rcdd_z(n, rng, alpha)
    assert alpha_rcdd(SparseMatrix(A)) >= alpha * (1 - 1e-12)
    # strictly RCDD implies invertible: the factorization succeeds
    lu = np.linalg.solve(A, np.eye(n))
    Dinv = 1.0 / np.diag(A)
    for _ in range(5):
        x = rng.random(n)
        y = lu @ x
        lo = Dinv * x
        hi = lo + (x.sum() / alpha) * Dinv
        assert np.all(y >= lo - 1e-12 * np.abs(y).max())
        assert np.all(y <= hi + 1e-12 * np.abs(y).max())


def test_rcdd_system():
    sys_ = rcdd_system(A2)
    assert sys_.alpha == 1 and np.allclose(sys_.D, [1, 1])


def test_lap_pinv_kernel_rhs():
    x, rep = solve_lap_pinv(CYCLE3, np.ones(3))
    assert np.array_equal(x, np.zeros(3))


def test_lap_pinv_cycle():
    b = np.array([1.0, -1.0, 0.0])
    x, _ = solve_lap_pinv(CYCLE3, b, eps=1e-6)
    ref = dense_pinv(CYCLE3) @ b
    assert np.linalg.norm(x - ref) <= 1e-6 * np.linalg.norm(ref)


@pytest.mark.slow
def test_lap_pinv_symmetric():
    L = random_undirected(8, np.random.default_rng(3))
    b = np.random.default_rng(4).standard_normal(8)
    b -= b.mean()
    x, _ = solve_lap_pinv(L, b, eps=1e-6)
    ref = dense_pinv(L) @ b
    assert np.linalg.norm(x - ref) <= 1e-6 * np.linalg.norm(ref)


@pytest.mark.slow
def test_lap_pinv_directed():
    L = random_digraph(10, np.random.default_rng(12))
    b = np.random.default_rng(5).standard_normal(10)
    x, _ = solve_lap_pinv(L, b, eps=1e-6)
    ref = dense_pinv(L) @ b
    assert np.linalg.norm(x - ref) <= 1e-6 * np.linalg.norm(ref)


def test_lap_pinv_not_connected():
    with pytest.raises(NotConnected):
        solve_lap_pinv(from_edge_list([(0, 1, 1)], 2), np.array([1.0, -1.0]))


def test_dd_zero():
    x, rep = solve_dd(A2, np.zeros(2))
    assert np.array_equal(x, np.zeros(2))


def test_dd_undirected_laplacian():
    L = random_undirected(12, np.random.default_rng(1))
    b = np.random.default_rng(2).standard_normal(12)
    b -= b.mean()
    x, rep = solve_dd(L.mat, b, 1e-6)
    y, _ = solve_sdd(L.mat, b)
    assert np.linalg.norm(L @ x - b) <= 1e-6 * np.linalg.norm(b)
    # both solutions differ only along the kernel direction 1
    d = x - y
    assert np.linalg.norm(d - d.mean()) <= 1e-4 * np.linalg.norm(y)


def test_dd_dag_of_cycles():
    # two 3-cycles joined by a single arc 0 -> 3: not strongly connected
    e = [(0, 1, 1), (1, 2, 1), (2, 0, 1), (3, 4, 2), (4, 5, 1), (5, 3, 1.5), (0, 3, 0.7)]
    L = from_edge_list(e, 6)
    M = L.toarray()
    rhs = M @ np.random.default_rng(0).standard_normal(6)
    x, _ = solve_dd(L.mat, rhs, 1e-6)
    assert np.linalg.norm(M @ x - rhs) <= 1e-6 * np.linalg.norm(rhs)
    # and the same for the row dominant transpose
    xt, rep = solve_dd(SparseMatrix(M.T), M.T @ np.arange(6.0), 1e-6)
    assert rep.extra["kind"] == "rdd"
    assert np.linalg.norm(M.T @ xt - M.T @ np.arange(6.0)) <= 1e-6 * np.linalg.norm(M.T @ np.arange(6.0))


def test_dd_rejects():
    with pytest.raises(BadParameter):
        solve_dd(SparseMatrix([[1, 2], [2, 1]]), np.ones(2))
