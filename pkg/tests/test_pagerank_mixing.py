import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dirlap.errors import BadParameter, NoMixing
from dirlap.oracles import (brute_tmix, brute_tpp, column_norm_pinv, dense_ppr,
                            power_stationary)
from dirlap.pagerank_mixing import (dist_probe, estimate_tpp, lpinv_bounds,
                                    personalized_pagerank, probe_count, refine_stationary)

from graphs import complete_graph, cycle, random_digraph, walk

TWO = walk(cycle(2))


def test_ppr_two_cycle():
    x, _ = personalized_pagerank(TWO, np.array([1.0, 0.0]), 0.5)
    assert np.allclose(x, [2 / 3, 1 / 3], atol=1e-6)


def test_ppr_beta_near_one():
    p = np.array([0.2, 0.5, 0.3])
    x, _ = personalized_pagerank(walk(cycle(3)), p, 1 - 1e-12, eps=1e-10)
    assert np.allclose(x, p, atol=1e-9)


def test_ppr_random_thirty():
    W = walk(random_digraph(30, np.random.default_rng(30)))
    p = np.random.default_rng(1).random(30)
    eps = 1e-6
    x, rep = personalized_pagerank(W, p, 0.1, eps)
    assert np.linalg.norm(x - dense_ppr(W, p, 0.1)) <= eps * np.linalg.norm(p)
    assert rep.residual <= 3 * eps


def test_ppr_errors():
    with pytest.raises(BadParameter):
        personalized_pagerank(TWO, np.ones(2), 1.0)
    with pytest.raises(BadParameter):
        personalized_pagerank(TWO, np.ones(2), 0.0)
    with pytest.raises(BadParameter):
        personalized_pagerank(TWO, np.array([1.0, -1.0]), 0.5)
    with pytest.raises(BadParameter):
        personalized_pagerank(TWO, np.ones(3), 0.5)


def test_ppr_zero_restart():
    x, rep = personalized_pagerank(TWO, np.zeros(2), 0.5)
    assert np.array_equal(x, np.zeros(2))


def test_ppr_below_float_range():
    with pytest.raises(NoMixing):
        personalized_pagerank(TWO, np.ones(2), 1e-12)


@settings(max_examples=12)
@given(st.integers(2, 20), st.integers(0, 10 ** 6), st.sampled_from([0.5, 0.1, 0.01]))
def test_ppr_fixed_point_and_stationary(n, seed, beta):
    W = walk(random_digraph(n, np.random.default_rng(seed)))
    eps = 1e-6
    p = np.random.default_rng(seed + 1).random(n)
    x, _ = personalized_pagerank(W, p, beta, eps)
    Wd = W.toarray()
    assert np.linalg.norm(beta * p + (1 - beta) * Wd @ x - x) <= 3 * eps * np.linalg.norm(p)
    s = power_stationary(Wd, tol=1e-14)
    y, _ = personalized_pagerank(W, s, beta, eps)
    assert np.linalg.norm(y - s) <= eps * np.linalg.norm(s)


def test_probe_two_cycle_large():
    decision, top = dist_probe(TWO, 1)
    assert decision == "large"
    assert top == pytest.approx(1.0)


def test_probe_complete_graph():
    # on 1-perp W acts as -I/3 for K4, so M_pp(beta) g = beta g / (1 + (1 - beta) / 3)
    W = walk(complete_graph(4))
    for k in (2, 32, 64):
        beta = 1.0 / k
        expect = beta / (1 + (1 - beta) / 3)
        decision, top = dist_probe(W, k)
        assert top == pytest.approx(expect, rel=1e-6)
        assert decision == ("small" if expect <= 4 ** -1.5 / 10 else "large")
    assert dist_probe(W, 64)[0] == "small" and dist_probe(W, 32)[0] == "large"


def test_probe_deterministic():
    W = walk(random_digraph(9, np.random.default_rng(2)))
    assert dist_probe(W, 8, seed=5) == dist_probe(W, 8, seed=5)


def test_probe_count():
    assert probe_count(10) == math.ceil(8 * math.log(10)) + 4


def test_tpp_complete():
    W = walk(complete_graph(4))
    est = estimate_tpp(W)
    l1, _ = column_norm_pinv(W)
    assert est.kappa_tilde == 64
    assert brute_tpp(W) <= est.kappa_tilde <= 400 * 16 * l1


def test_tpp_cycle():
    W = walk(cycle(3))
    est = estimate_tpp(W)
    assert brute_tpp(W) <= est.kappa_tilde < math.inf
    assert est.kappa_tilde >= 1 and est.probes == probe_count(3)
    assert [k for k, _ in est.dist_history] == [2.0 ** i for i in range(len(est.dist_history))]


def test_bounds_keys():
    b = lpinv_bounds(8.0, 16)
    assert b["l1_upper"] == 8.0 * 16 * 4 * 4
    assert b["l2_upper"] == 4 * b["l1_upper"]


@pytest.mark.parametrize("seed", range(20))
def test_tpp_sandwich(seed):
    rng = np.random.default_rng(1000 + seed)
    n = int(rng.integers(3, 21))
    W = walk(random_digraph(n, rng))
    est = estimate_tpp(W, seed=seed)
    l1, _ = column_norm_pinv(W)
    assert brute_tpp(W) <= est.kappa_tilde <= 400 * n * n * l1


@pytest.mark.parametrize("seed", range(8))
def test_mixing_relations(seed):
    rng = np.random.default_rng(2000 + seed)
    n = int(rng.integers(2, 13))
    W = walk(random_digraph(n, rng))
    tmix, tpp = brute_tmix(W), brute_tpp(W)
    l1, l2 = column_norm_pinv(W)
    lg = max(math.log2(n), 1.0)
    assert math.sqrt(tmix) / 16 <= l1 <= tmix * 4 * math.sqrt(n) * lg
    assert tpp / 8 <= l1 <= tpp * 16 * math.sqrt(n) * lg
    assert tpp <= 36 * tmix
    assert l1 / math.sqrt(n) <= l2 * (1 + 1e-12) and l2 <= math.sqrt(n) * l1 * (1 + 1e-12)


@given(st.integers(2, 6), st.integers(2, 6), st.integers(0, 10 ** 6))
def test_simplex_vs_operator_norm(m, n, seed):
    # max over the simplex of ||A p - b||_1 equals the column norm of A - b 1^T
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((m, n))
    b = rng.standard_normal(m)
    op = np.abs(A - b[:, None]).sum(axis=0).max()
    P = rng.dirichlet(np.ones(n), size=200)
    assert np.all(np.abs(A @ P.T - b[:, None]).sum(axis=0) <= op * (1 + 1e-12))
    verts = [np.abs(A @ e - b).sum() for e in np.eye(n)]
    assert max(verts) == pytest.approx(op)


def test_refine_two_cycle():
    s, _ = refine_stationary(TWO, 1e-8)
    assert np.allclose(s, 0.5, atol=1e-8)


def test_refine_three_cycle():
    s, _ = refine_stationary(walk(cycle(3)), 1e-8)
    assert np.allclose(s, 1 / 3, atol=1e-8)


def test_refine_random_thirty():
    W = walk(random_digraph(30, np.random.default_rng(33)))
    eps = 1e-8
    s, rep = refine_stationary(W, eps)
    assert np.linalg.norm(s - power_stationary(W.toarray(), tol=1e-14)) <= eps


def test_refine_multiplicative():
    W = walk(random_digraph(12, np.random.default_rng(4)))
    eps = 1e-3
    s, _ = refine_stationary(W, eps, multiplicative=True)
    ref = power_stationary(W.toarray(), tol=1e-14)
    assert np.all(np.abs(s / ref - 1) <= eps)
