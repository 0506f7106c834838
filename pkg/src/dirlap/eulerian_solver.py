"""Solver for Eulerian directed Laplacians.

The system ``L x = b`` is replaced by the symmetric squared system
``X x = L^T U^+ b`` with ``X = L^T U^+ L`` and ``U = (L + L^T)/2``.  The
squared system is preconditioned by ``Z = U + R^T W_S R``, a sampled
low-rank correction of ``U`` whose pseudoinverse is applied with the
Woodbury identity, and solved by preconditioned Chebyshev iteration.
"""
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .errors import BadParameter, DimError, NoConvergence, NotConnected, NotEulerian
from .graph_core import as_laplacian, is_eulerian, strongly_connected, symmetrization
from .report import SolveReport, Timer
from .sdd_solver import PinvOperator, build_sdd_operator

DENSE_OPERATOR_MAX = 400


@dataclass(frozen=True)
class EulerianConfig:
    C: float = 4.0                 # oversampling constant in p_i = C l_i ln n
    c_rel: float = 4.0             # relative condition bound factor for Chebyshev
    k: float = None                # sampling parameter override
    restarts: int = 3
    method: str = "chebyshev"      # or "cg" (experimental)
    lam_min: float = 0.5
    jl_factor: float = 24.0
    prob_floor: float = 1e-6
    sdd_backend: str = "dense_factorization"
    sdd_tol: float = 1e-10
    seed: int = 0
    strict: bool = True            # raise when the residual target is missed


@dataclass(frozen=True, eq=False)
class LeverageEstimates:
    l: np.ndarray
    jl_rows: int


@dataclass(frozen=True, eq=False)
class WoodburyPreconditioner:
    k: float
    weights: np.ndarray            # length m, nonzero on sampled rows
    R: np.ndarray                  # r x n, rows b_i^T U^+ L of sampled rows
    M_inv: tuple                   # Cholesky factor of W_S^{-1} + R U^+ R^T
    u_op: PinvOperator
    rows: np.ndarray = field(default=None)
    samples: int = 0
    oversampling: float = 4.0

    @property
    def n(self):
        return self.u_op.n

    @property
    def rank(self):
        return self.R.shape[0]


def _rng(seed, stream):
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, stream])


def incidence(U):
    """Weighted incidence matrix B (rows sqrt(w)(e_a - e_b), a < b) with U = B^T B."""
    csr = U.csr if hasattr(U, "csr") else sp.csr_matrix(U)
    up = sp.triu(csr, k=1).tocoo()
    mask = up.data < 0
    a, b, w = up.row[mask], up.col[mask], -up.data[mask]
    m = a.size
    n = csr.shape[0]
    sw = np.sqrt(w)
    rows = np.concatenate([np.arange(m), np.arange(m)])
    cols = np.concatenate([a, b])
    vals = np.concatenate([sw, -sw])
    B = sp.csr_matrix((vals, (rows, cols)), shape=(m, n))
    return B, a, b, w


def _require_eulerian(L):
    L = as_laplacian(L)
    if not is_eulerian(L):
        raise NotEulerian("Laplacian is not Eulerian (row sums are not zero)")
    return L


def estimate_leverage(L, u_op, seed=0, jl_factor=24.0):
    """JL estimates of l_i = ||L^T U^+ b_i||^2 in the U^+ norm, one per incidence row."""
    L = _require_eulerian(L)
    n = L.n
    B, a, b, w = incidence(symmetrization(L))
    m = B.shape[0]
    r = max(1, int(math.ceil(jl_factor * math.log(max(n, 2)))))
    if m == 0:
        return LeverageEstimates(np.zeros(0), r)
    Pi = _rng(seed, 1).standard_normal((r, m)) / math.sqrt(r)
    # T^T = U^+ L U^+ B^T Pi^T, so that T b_i = Pi B U^+ L^T U^+ b_i
    G = np.asarray(B.T @ Pi.T)
    G = u_op.apply(G)
    G = L.csr @ G
    G = u_op.apply(G)
    diff = G[a] - G[b]
    l = w * np.einsum("ij,ij->i", diff, diff)
    return LeverageEstimates(l, r)


def default_k(n, m):
    k = max(n * n / math.sqrt(max(m, 1)), n ** (4.0 / 3.0))
    return float(min(max(k, 1.0), max(n * n, 1)))


def build_preconditioner(L, u_op, k, seed=0, leverage=None, C=4.0, prob_floor=1e-6):
    L = _require_eulerian(L)
    n = L.n
    if not (1 <= k <= max(n * n, 1)):
        raise BadParameter("k must lie in [1, n^2] = [1, %d], got %g" % (n * n, k))
    B, a, b, w = incidence(symmetrization(L))
    m = B.shape[0]
    if leverage is None:
        leverage = estimate_leverage(L, u_op, seed)
    l = np.asarray(leverage.l, dtype=float)
    if m == 0:
        empty = np.zeros((0, n))
        return WoodburyPreconditioner(k, np.zeros(0), empty, None, u_op, np.zeros(0, int), 0, C)
    p = C * l * math.log(max(n, 2))
    floor = max(p.sum(), 1e-300) * prob_floor / m
    p = np.maximum(p, floor)
    total = p.sum()
    count = int(math.ceil(total / k))
    picks = _rng(seed, 2).choice(m, size=count, p=p / total)
    weights = np.bincount(picks, minlength=m) / p
    rows = np.flatnonzero(weights)
    BS = B[rows]
    UBt = u_op.apply(np.asarray(BS.T.todense()))
    Rt = np.asarray(L.csr.T @ UBt)                   # columns L^T U^+ b_i
    URt = u_op.apply(Rt)
    Mmat = np.diag(1.0 / weights[rows]) + Rt.T @ URt
    Mmat = 0.5 * (Mmat + Mmat.T)
    fac = sla.cho_factor(Mmat, lower=True, check_finite=False)
    return WoodburyPreconditioner(k, weights, Rt.T.copy(), fac, u_op, rows, count, C)


def apply_preconditioner(P, y):
    """Z^+ y = U^+ y - U^+ R^T (W_S^{-1} + R U^+ R^T)^{-1} R U^+ y."""
    y = np.asarray(y, dtype=float)
    if y.shape[0] != P.n:
        raise DimError("vector of length %d for operator of size %d" % (y.shape[0], P.n))
    t = P.u_op.apply(y)
    if P.rank == 0:
        return t
    c = sla.cho_solve(P.M_inv, P.R @ t, check_finite=False)
    return t - P.u_op.apply(P.R.T @ c)


def dense_preconditioner(P):
    """Explicit Z = U~ + R^T W_S R (test helper; needs the dense U~ pseudoinverse)."""
    Ut = np.linalg.pinv(P.u_op.matrix, hermitian=True) if P.u_op.matrix is not None else None
    if Ut is None:
        raise ValueError("dense formation needs the dense backend")
    if P.rank == 0:
        return Ut
    return Ut + P.R.T @ np.diag(P.weights[P.rows]) @ P.R


def chebyshev(A, M, b, x0, lo, hi, iters):
    """Preconditioned Chebyshev iteration for eigenvalues of M A in [lo, hi]."""
    theta = 0.5 * (hi + lo)
    delta = 0.5 * (hi - lo)
    x = x0.copy()
    r = b - A(x)
    if delta <= 0:
        return x + M(r) / theta
    sigma = theta / delta
    rho = 1.0 / sigma
    d = M(r) / theta
    for _ in range(iters):
        x = x + d
        r = r - A(d)
        z = M(r)
        rho_new = 1.0 / (2.0 * sigma - rho)
        d = rho_new * rho * d + (2.0 * rho_new / delta) * z
        rho = rho_new
    return x


def _pcg_block(A, M, b, x0, target_fn, maxiter):
    x = x0.copy()
    r = b - A(x)
    z = M(r)
    p = z.copy()
    rz = np.sum(r * z, axis=0)
    it = 0
    for it in range(1, maxiter + 1):
        Ap = A(p)
        pAp = np.sum(p * Ap, axis=0)
        pAp = np.where(pAp == 0, 1.0, pAp)
        a = rz / pAp
        x = x + a * p
        r = r - a * Ap
        if it % 10 == 0 and target_fn(x):
            break
        z = M(r)
        rz_new = np.sum(r * z, axis=0)
        beta = rz_new / np.where(rz == 0, 1.0, rz)
        p = z + beta * p
        rz = rz_new
    return x, it


def _unorm_pinv(u_op, v):
    y = u_op.apply(v)
    return np.sqrt(np.maximum(np.sum(v * y, axis=0), 0.0))


class EulerianSolver:
    """Prepared solver for one Eulerian Laplacian; ``solve`` may be called repeatedly.

    Building it factors the symmetrization, estimates leverage scores and
    samples the Woodbury preconditioner once.
    """

    def __init__(self, L, config=None, **overrides):
        self.cfg = cfg = replace(config or EulerianConfig(), **overrides)
        L = _require_eulerian(L)
        self.L = L
        self.n = n = L.n
        if not strongly_connected(L):
            raise NotConnected("Eulerian solver needs a connected graph")
        self.Lc, self.LTc = L.csr, L.csr.T.tocsr()
        self.P = None
        if n <= 1:
            return
        U = symmetrization(L)
        self.u_op = build_sdd_operator(U, cfg.sdd_tol, cfg.sdd_backend, rand_tag=cfg.seed)
        m = L.num_edges()
        k = float(cfg.k) if cfg.k is not None else default_k(n, m)
        self.k = min(max(k, 1.0), float(n * n))
        self.leverage = estimate_leverage(L, self.u_op, cfg.seed, cfg.jl_factor)
        self.P = build_preconditioner(L, self.u_op, self.k, cfg.seed, self.leverage, cfg.C,
                                      cfg.prob_floor)
        self._dense = None
        if self.u_op.matrix is not None and n <= DENSE_OPERATOR_MAX:
            # small systems: the same operators as explicit matrices (cheaper to apply)
            Up = self.u_op.matrix
            Ld = self.Lc.toarray()
            Xd = Ld.T @ Up @ Ld
            Zd = apply_preconditioner(self.P, np.eye(n))
            self._dense = (Up, Ld, 0.5 * (Xd + Xd.T), 0.5 * (Zd + Zd.T))

    def solve(self, b, eps=1e-8):
        """Approximate L^+ b; see solve_eulerian for the guarantee."""
        timer = Timer()
        cfg = self.cfg
        n = self.n
        b = np.array(b, dtype=float)
        if b.shape[0] != n:
            raise DimError("right-hand side has length %d, expected %d" % (b.shape[0], n))
        b = b - b.mean(axis=0)
        report = SolveReport(0, 0.0, eps, 0.0, "eulerian-" + cfg.method)
        if n <= 1 or not np.any(b):
            report.wall_time = timer.elapsed()
            return np.zeros_like(b), report
        u_op, P, Lc, LTc = self.u_op, self.P, self.Lc, self.LTc
        if self._dense is not None:
            Up, Ld, Xd, Zd = self._dense
            Lc, LTc = Ld, Ld.T

            def X(v):
                return Xd @ v

            def Zp(v):
                return Zd @ v
        else:
            def X(v):
                return LTc @ u_op.apply(Lc @ v)

            def Zp(v):
                return apply_preconditioner(P, v)

        rhs = LTc @ u_op.apply(b)
        bnorm = _unorm_pinv(u_op, b)
        bnorm = np.where(bnorm == 0, 1.0, bnorm)
        target = eps / math.sqrt(2.0)

        def rel_residual(x):
            return float(np.max(_unorm_pinv(u_op, Lc @ x - b) / bnorm))

        lo, hi = cfg.lam_min, 2.0 * cfg.c_rel * self.k
        iters = int(math.ceil(math.sqrt(cfg.c_rel * self.k) * math.log(2.0 / eps)))
        x = np.zeros_like(b)
        total = 0
        res = math.inf
        history = []
        if cfg.method == "cg":
            x, total = _pcg_block(X, Zp, rhs, x, lambda y: rel_residual(y) <= target,
                                  iters * (2 ** (cfg.restarts + 1)))
            res = rel_residual(x)
            history.append(res)
        else:
            for attempt in range(cfg.restarts + 1):
                x = chebyshev(X, Zp, rhs, x, lo, hi, iters)
                total += iters
                res = rel_residual(x)
                history.append(res)
                if res <= target:
                    break
                if not cfg.strict and len(history) > 1 and res > 0.5 * history[-2]:
                    break                  # stalled at the rounding floor
                iters *= 2
        x = x - x.mean(axis=0)
        report.iterations = total
        report.residual = res
        report.wall_time = timer.elapsed()
        report.extra = {"k": self.k, "samples": P.samples, "rank": P.rank,
                        "jl_rows": self.leverage.jl_rows, "lam_bounds": [lo, hi],
                        "residual_history": history, "restarts": len(history) - 1,
                        "converged": bool(res <= target)}
        if cfg.strict and not res <= target:
            raise NoConvergence("Eulerian solve stalled at relative residual %.3g (target %.3g)"
                                % (res, target), report)
        return x, report


def solve_eulerian(L, b, eps=1e-8, config=None, **overrides):
    """Approximate L^+ b for a strongly connected Eulerian Laplacian.

    ``b`` may be a vector or an n-by-k block; blocks share one iteration
    schedule so the result is the same linear map applied to each column.
    Guarantee: ``||x - L^+ b||_U <= eps ||b||_{U^+}`` (checked a posteriori).
    """
    L = _require_eulerian(L)
    b = np.asarray(b, dtype=float)
    if b.shape[0] != L.n:
        raise DimError("right-hand side has length %d, expected %d" % (b.shape[0], L.n))
    return EulerianSolver(L, config, **overrides).solve(b, eps)
