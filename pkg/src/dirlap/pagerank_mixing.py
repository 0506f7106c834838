"""Personalized PageRank, PageRank mixing-time estimation, stationary refinement.

PPR is computed from the boosted walk Laplacian ``M = c I + (I - W)``
with ``c = beta / (1 - beta)``: ``beta (I - (1-beta) W)^{-1} = c M^{-1}``.
A stationary scaling of ``I - W`` at a small enough alpha makes ``M X``
alpha-RCDD, so each PPR vector costs one alpha-RCDD solve.
"""
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import BadParameter, NoConvergence, NoMixing
from .graph_core import SparseMatrix, as_walk, walk_laplacian
from .rcdd_solver import ALPHA_FLOOR, REFINE_ROUNDS, AlphaRcddSolver, clamp_eps, lenient
from .report import SolveReport, Timer
from .stationary import compute_stationary

REFINE_C = 8.0
K_CAP = 2.0 ** 62


@dataclass(frozen=True)
class ConditionEstimate:
    kappa_tilde: float
    probes: int
    beta_final: float
    dist_history: list = field(default_factory=list)
    bounds: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class PprSystem:
    """Scaled boosted system shared by all PPR solves at one beta."""
    W: object
    beta: float
    c: float
    X: np.ndarray
    alpha: float
    A: SparseMatrix
    stationary_rounds: int
    solver: AlphaRcddSolver


def ppr_system(W, beta, config=None):
    W = as_walk(W)
    if not (0.0 < beta < 1.0):
        raise BadParameter("beta must lie in (0, 1), got %r" % (beta,))
    n = W.n
    IW = walk_laplacian(W)
    c = beta / (1.0 - beta)
    alpha = min(c / (3.0 * n), 0.25)
    if alpha < ALPHA_FLOOR:
        raise NoMixing("restart probability %.3g is below what float64 can certify" % beta)
    st = compute_stationary(IW, alpha, config=config)
    X = st.s / IW.diag
    A = SparseMatrix((IW.csr + c * sp.identity(n)) @ sp.diags(X))
    # inner solves may stop at the rounding floor; _ppr_solve refines on residuals
    solver = AlphaRcddSolver(A, alpha, lenient(config))
    return PprSystem(W, beta, c, X, alpha, A, st.iterations, solver)


def _ppr_solve(system, p, eps, config=None):
    """x ~ c M^{-1} p for any right-hand side (vector or block), no sign checks."""
    n = system.W.n
    p = np.asarray(p, dtype=float)
    rhs = system.c * p
    inner = clamp_eps(eps * system.beta / (45.0 * math.sqrt(n)))
    Mc = system.A.csr @ sp.diags(1.0 / system.X)      # = c I + (I - W)
    y, rep = system.solver.solve(rhs, inner)
    x = system.X[:, None] * y if y.ndim > 1 else system.X * y
    iters = rep.iterations
    pn = np.linalg.norm(p, axis=0)
    pn = np.where(pn == 0, 1.0, pn)
    # fixed-point residual beta p + (1-beta) W x - x = (1-beta)(c p - M x)
    history = []
    for _ in range(REFINE_ROUNDS):
        r = rhs - Mc @ x
        fp = (1.0 - system.beta) * np.linalg.norm(r, axis=0) / pn
        history.append(float(np.max(fp)))
        if np.all(fp <= inner):
            break
        dy, rep = system.solver.solve(r, inner)
        iters += rep.iterations
        x = x + (system.X[:, None] * dy if dy.ndim > 1 else system.X * dy)
    return x, iters, history


def personalized_pagerank(W, p, beta, eps=1e-6, config=None, system=None):
    """x ~ beta (I - (1-beta) W)^{-1} p with ||x - x*||_2 <= eps ||p||_2."""
    timer = Timer()
    W = as_walk(W)
    if not (0.0 < beta < 1.0):
        raise BadParameter("beta must lie in (0, 1), got %r" % (beta,))
    p = np.asarray(p, dtype=float)
    if p.shape[0] != W.n:
        raise BadParameter("restart vector has length %d, expected %d" % (p.shape[0], W.n))
    if np.any(p < 0):
        raise BadParameter("restart vector must be nonnegative")
    if not np.any(p):
        return np.zeros_like(p), SolveReport(0, 0.0, eps, timer.elapsed(), "ppr")
    if system is None:
        system = ppr_system(W, beta, config)
    x, iters, history = _ppr_solve(system, p, eps, config)
    res = float(np.linalg.norm(beta * p + (1 - beta) * (W.csr @ x) - x) / np.linalg.norm(p))
    rep = SolveReport(iters, res, eps, timer.elapsed(), "ppr",
                      {"beta": beta, "alpha": system.alpha,
                       "stationary_rounds": system.stationary_rounds,
                       "residual_history": history})
    return x, rep


def probe_count(n):
    return int(math.ceil(8.0 * math.log(max(n, 2)))) + 4


def _probe_vectors(n, seed, count):
    G = np.random.default_rng([int(seed), 11, n]).standard_normal((n, count))
    G -= G.mean(axis=0)
    G /= np.linalg.norm(G, axis=0)
    return G


def dist_probe(W, k, seed=0, config=None):
    """Decide whether M_pp(1/k) has mixed on random unit probes orthogonal to 1."""
    W = as_walk(W)
    if not k >= 1:
        raise BadParameter("k must be at least 1")
    n = W.n
    thresh = n ** -1.5 / 10.0
    if n == 1:
        return "small", 0.0
    G = _probe_vectors(n, seed, probe_count(n))
    beta = 1.0 / k
    if beta >= 1.0:
        Z = G
    else:
        system = ppr_system(W, beta, config)
        Z, _, _ = _ppr_solve(system, G, n ** -1.5 / 100.0, config)
    norms = np.linalg.norm(Z, axis=0)
    top = float(norms.max())
    return ("small" if top <= thresh else "large"), top


def lpinv_bounds(kappa, n):
    """Bounds on ||(I-W)^+|| and t_mix implied by an estimate t_pp <= kappa."""
    lg = max(math.log2(max(n, 2)), 1.0)
    l1_upper = kappa * 16.0 * math.sqrt(n) * lg
    l1_lower = kappa / (400.0 * n * n)
    return {"l1_upper": l1_upper, "l1_lower": l1_lower,
            "l2_upper": math.sqrt(n) * l1_upper,
            "tmix_upper": (16.0 * l1_upper) ** 2}


def estimate_tpp(W, seed=0, config=None, k_cap=K_CAP):
    """Doubling search for the first k where the PPR probes report mixing."""
    W = as_walk(W)
    n = W.n
    history = []
    k = 1.0
    while k <= k_cap:
        decision, top = dist_probe(W, k, seed, config)
        history.append((k, top))
        if decision == "small":
            return ConditionEstimate(k, probe_count(n), 1.0 / k, history, lpinv_bounds(k, n))
        k *= 2.0
    raise NoMixing("PageRank probes did not mix for k up to %g" % k_cap)


def refine_stationary(W, eps, seed=0, estimate=None, config=None, multiplicative=False,
                      max_apply=200):
    """Stationary distribution with ||s' - s||_2 <= eps by repeated PPR applications.

    The restart probability is eps / (8 kappa) (kept representable); each
    application shrinks the component orthogonal to s, and the observed
    contraction bounds the remaining error.  With ``multiplicative`` the
    target becomes eps * min(s') / 8 so that every entry is within (1 +- eps).
    """
    timer = Timer()
    W = as_walk(W)
    n = W.n
    if n == 1:
        return np.ones(1), SolveReport(0, 0.0, eps, timer.elapsed(), "refine-stationary")
    if estimate is None:
        estimate = estimate_tpp(W, seed=seed, config=config)
    kappa = estimate.kappa_tilde
    beta = eps / (REFINE_C * kappa)
    beta_min = 3.0 * n * ALPHA_FLOOR * 4.0
    beta = min(max(beta, beta_min), 0.5)
    system = ppr_system(W, beta, config)
    y = np.full(n, 1.0 / n)
    diffs = []
    err = math.inf
    applied = 0
    while applied < max_apply:
        target = eps * (y.min() / REFINE_C if multiplicative else 1.0)
        y_new, _, _ = _ppr_solve(system, y, min(0.1 * target, 1e-3), config)
        y_new = y_new / y_new.sum()
        diffs.append(float(np.linalg.norm(y_new - y)))
        y = y_new
        applied += 1
        if len(diffs) >= 2:
            rho = diffs[-1] / diffs[-2] if diffs[-2] > 0 else 0.0
            if rho < 0.9:
                err = diffs[-1] * rho / (1.0 - rho) + 1e-3 * target
                if err <= 0.5 * target:
                    break
    rep = SolveReport(applied, err, eps, timer.elapsed(), "refine-stationary",
                      {"beta": beta, "kappa_tilde": kappa, "differences": diffs,
                       "multiplicative": multiplicative})
    if not err <= 0.5 * eps * (y.min() / REFINE_C if multiplicative else 1.0):
        raise NoConvergence("stationary refinement did not contract", rep)
    return y, rep
