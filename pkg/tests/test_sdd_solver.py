import numpy as np
import pytest
from hypothesis import given, strategies as st

from dirlap.errors import NotSDD, NotSymmetric
from dirlap.graph_core import SparseMatrix, from_edge_list, symmetrization
from dirlap.oracles import dense_pinv
from dirlap.sdd_solver import build_sdd_operator, solve_sdd

from graphs import random_undirected

TRIANGLE = SparseMatrix([[2, -1, -1], [-1, 2, -1], [-1, -1, 2]])
PATH = SparseMatrix([[1, -1, 0], [-1, 2, -1], [0, -1, 1]])


def undirected(n, seed):
    return random_undirected(n, np.random.default_rng(seed)).mat


def u_norm(U, x):
    return float(np.sqrt(max(x @ (U @ x), 0.0)))


@pytest.mark.parametrize("backend", ["dense_factorization", "pcg"])
def test_triangle_residual(backend):
    op = build_sdd_operator(TRIANGLE, 1e-10, backend)
    x = np.array([1.0, -1.0, 0.0])
    y = op.apply(x)
    assert np.linalg.norm(TRIANGLE @ y - x) <= 1e-9 * np.linalg.norm(x)
    assert np.allclose(op.apply(np.ones(3)), 0, atol=1e-14)


@pytest.mark.parametrize("backend", ["dense_factorization", "pcg"])
def test_path(backend):
    y = build_sdd_operator(PATH, 1e-10, backend).apply(np.array([1.0, 0.0, -1.0]))
    ref = dense_pinv(PATH) @ np.array([1.0, 0.0, -1.0])
    assert np.allclose(y, ref, atol=1e-9)
    assert np.allclose(y - y.mean(), [1, 0, -1], atol=1e-9)


def test_solve_trivial():
    x, rep = solve_sdd(TRIANGLE, np.zeros(3))
    assert np.array_equal(x, np.zeros(3)) and rep.iterations == 0
    x, _ = solve_sdd(SparseMatrix(2 * np.eye(2)), np.array([2.0, 4.0]))
    assert np.allclose(x, [1, 2])


@pytest.mark.parametrize("backend", ["dense_factorization", "pcg"])
def test_random_laplacian(backend):
    U = undirected(20, 3)
    b = np.random.default_rng(1).standard_normal(20)
    tol = 1e-8
    x, _ = solve_sdd(U, b, tol, backend)
    Up = dense_pinv(U)
    bp = b - b.mean()
    ref = Up @ bp
    assert u_norm(U.toarray(), x - ref) <= tol * np.sqrt(bp @ Up @ bp)


def test_rejects():
    with pytest.raises(NotSymmetric):
        build_sdd_operator(SparseMatrix([[1, -1], [0, 1]]))
    with pytest.raises(NotSDD):
        build_sdd_operator(SparseMatrix([[1, -2], [-2, 1]]))


def test_multi_component_kernel():
    U = symmetrization(from_edge_list([(0, 1, 1), (1, 0, 1), (2, 3, 2), (3, 2, 2)], 4))
    op = build_sdd_operator(U)
    y = op.apply(np.array([1.0, 0.0, 0.0, 0.0]))
    assert abs(y[:2].sum()) < 1e-14 and abs(y[2:].sum()) < 1e-14
    assert np.allclose(U @ y, [0.5, -0.5, 0, 0])


@given(st.integers(3, 12), st.integers(0, 10 ** 6))
def test_pcg_sandwich(n, seed):
    # 1/2 U <= U~ <= U  is equivalent to  U^+ <= U~^+ <= 2 U^+  on 1-perp
    U = undirected(n, seed)
    op = build_sdd_operator(U, 0.5, "pcg")
    Up = dense_pinv(U)
    V = np.random.default_rng(seed).standard_normal((n, 20))
    V -= V.mean(axis=0)
    for v in V.T:
        q = v @ op.apply(v)
        ref = v @ Up @ v
        assert ref * (1 - 1e-9) <= q <= 2 * ref * (1 + 1e-9)


@given(st.integers(3, 12), st.integers(0, 10 ** 6), st.floats(-3, 3), st.floats(-3, 3))
def test_operator_linear_and_centered(n, seed, a, b):
    U = undirected(n, seed)
    tol = 1e-9
    rng = np.random.default_rng(seed + 1)
    x, y = rng.standard_normal((2, n))
    for backend in ("dense_factorization", "pcg"):
        op = build_sdd_operator(U, tol, backend)
        d = op.apply(a * x + b * y) - a * op.apply(x) - b * op.apply(y)
        Ud = U.toarray()
        bound = tol * (u_norm(Ud, op.apply(a * x)) + u_norm(Ud, op.apply(b * y))) + 1e-12
        assert u_norm(Ud, d) <= 4 * bound
        assert abs(op.apply(x).sum()) <= 1e-10 * np.linalg.norm(x)


def test_deterministic():
    U = undirected(15, 9)
    b = np.arange(15.0)
    r1 = build_sdd_operator(U, 1e-6, "pcg", rand_tag=4).apply(b)
    r2 = build_sdd_operator(U, 1e-6, "pcg", rand_tag=4).apply(b)
    assert np.array_equal(r1, r2)
