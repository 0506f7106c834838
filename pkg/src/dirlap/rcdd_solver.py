"""Reductions from diagonally dominant systems to Eulerian Laplacian solves.

* strictly RCDD Z-matrices embed into an Eulerian Laplacian one size larger;
* general RCDD matrices go through a double cover plus a diagonal boost;
* directed Laplacian pseudoinverses combine a boosted solve, a stationary
  rescaling and an approximate projection off the kernel;
* row or column diagonally dominant systems are rescaled to RCDD form.
"""
import math
from dataclasses import dataclass, replace

import numpy as np
import scipy.sparse as sp

from .errors import (BadCertificate, BadParameter, ConvergenceError, DimError, NoConvergence,
                     NotConnected, NotStrictlyRCDD, Singular)
from .eulerian_solver import EulerianConfig, EulerianSolver
from .graph_core import (DirectedLaplacian, SparseMatrix, alpha_rcdd, as_laplacian, as_sparse,
                         is_alpha_rcdd, is_z_matrix, random_walk_matrix, strongly_connected,
                         walk_laplacian)
from .report import SolveReport, Timer

# Tolerances requested from nested solves are clamped here: float64 cannot
# certify relative accuracies much below this.
EPS_FLOOR = 1e-10
REFINE_ROUNDS = 6
DD_ROUNDS = 40
# smallest alpha handed to the stationary computation by the reductions
ALPHA_FLOOR = 1e-9


def clamp_eps(eps):
    return max(float(eps), EPS_FLOOR)


def lenient(config):
    """Config whose Eulerian solves return their best iterate instead of raising;
    used where an outer residual check certifies the final answer."""
    return replace(config or EulerianConfig(), strict=False)


@dataclass(frozen=True, eq=False)
class RcddSystem:
    A: SparseMatrix
    alpha: float
    D: np.ndarray


def rcdd_system(A):
    A = as_sparse(A)
    a = alpha_rcdd(A)
    if not a >= 0:
        raise NotStrictlyRCDD("matrix is not RCDD")
    return RcddSystem(A, a, A.diagonal() / (1.0 + a) if math.isfinite(a) else A.diagonal())


def rcdd_embedding(A):
    """L = C A C^T with C = [I; -1^T]; Eulerian whenever A is an RCDD Z-matrix."""
    A = as_sparse(A).csr
    n = A.shape[0]
    r = np.asarray(A.sum(axis=1)).ravel()
    c = np.asarray(A.sum(axis=0)).ravel()
    tot = float(r.sum())
    L = sp.bmat([[A, sp.csr_matrix(-r[:, None])],
                 [sp.csr_matrix(-c[None, :]), sp.csr_matrix([[tot]])]], format="csr")
    mat = SparseMatrix(L)
    return DirectedLaplacian(mat, mat.diagonal())


def _vec(b, n):
    b = np.array(b, dtype=float)
    if b.shape[0] != n:
        raise DimError("right-hand side has length %d, expected %d" % (b.shape[0], n))
    return b


class RcddZSolver:
    """Prepared solver for a strictly RCDD Z-matrix through its Eulerian embedding."""

    def __init__(self, A, config=None):
        A = as_sparse(A)
        if not is_z_matrix(A):
            raise NotStrictlyRCDD("matrix has positive off-diagonal entries")
        self.alpha_rcdd = a = alpha_rcdd(A)
        if not a > 0:
            raise NotStrictlyRCDD("matrix is not strictly RCDD (alpha = %g)" % a)
        self.A = A
        self.n = A.n
        self.config = config
        self._eul = None

    @property
    def eulerian(self):
        if self._eul is None:
            self._eul = EulerianSolver(rcdd_embedding(self.A), self.config)
        return self._eul

    def solve(self, b, eps=1e-8):
        timer = Timer()
        n = self.n
        b = _vec(b, n)
        if not np.any(b):
            return np.zeros_like(b), SolveReport(0, 0.0, eps, timer.elapsed(), "rcdd-embedding")
        rhs = np.concatenate([b, -b.sum(axis=0, keepdims=True)], axis=0)
        z, rep = self.eulerian.solve(rhs, eps)
        x = z[:n] - z[n]
        res = np.linalg.norm(self.A.csr @ x - b) / np.linalg.norm(b)
        out = SolveReport(rep.iterations, float(res), eps, timer.elapsed(), "rcdd-embedding",
                          {"alpha_rcdd": self.alpha_rcdd, "eulerian": rep.to_dict()})
        return x, out


class AlphaRcddSolver(RcddZSolver):
    """RcddZSolver with a validated alpha certificate and the D-norm bound."""

    def __init__(self, A, alpha, config=None):
        A = as_sparse(A)
        if not alpha > 0:
            raise BadCertificate("alpha must be positive, got %r" % (alpha,))
        if not is_z_matrix(A):
            raise BadCertificate("matrix is not a Z-matrix")
        if not is_alpha_rcdd(A, alpha, rtol=1e-9):
            raise BadCertificate("matrix is not %g-RCDD (largest alpha %g)"
                                 % (alpha, alpha_rcdd(A)))
        super().__init__(A, config)
        self.alpha = alpha
        self.D = A.diagonal() / (1.0 + alpha)

    def solve(self, b, eps=1e-8):
        x, rep = super().solve(b, eps)
        bb = np.asarray(b, dtype=float)
        D = self.D[:, None] if bb.ndim > 1 else self.D
        rep.extra["d_norm_bound"] = (eps / self.alpha) * float(np.sqrt(np.sum(bb * bb / D)))
        rep.extra["alpha"] = self.alpha
        return x, rep


def solve_rcdd_z(A, b, eps=1e-8, config=None):
    """x ~ A^{-1} b for a strictly RCDD Z-matrix, via one Eulerian solve.

    Guarantee: ``||x - A^{-1}b||_H <= eps ||b||_{H^{-1}}`` with H = (A + A^T)/2.
    """
    A = as_sparse(A)
    if not is_z_matrix(A):
        return solve_rcdd_general(A, b, eps, config)
    b = _vec(b, A.n)
    return RcddZSolver(A, config).solve(b, eps)


def solve_alpha_rcdd(A, b, alpha, eps=1e-8, config=None):
    """Solve an alpha-RCDD Z-matrix system with the D-norm guarantee.

    ``||x - A^{-1}b||_D <= (eps/alpha) ||b||_{D^{-1}}`` where D = diag(A)/(1+alpha).
    """
    return AlphaRcddSolver(A, alpha, config).solve(b, eps)


def double_cover(M):
    """Z-matrix [[diag + M_-, -M_+], [-M_+, diag + M_-]] of twice the size."""
    csr = as_sparse(M).csr
    diag = sp.diags(csr.diagonal())
    off = csr - diag
    pos = off.multiply(off > 0)
    neg = off - pos
    top = diag + neg
    return SparseMatrix(sp.bmat([[top, -pos], [-pos, top]], format="csr"))


def _norm2_upper(csr):
    a = abs(csr)
    return math.sqrt(float(a.sum(axis=0).max()) * float(a.sum(axis=1).max()))


def _cover_solver(M, eps, config):
    """Solve M y = rhs through the double cover of M (prepared once)."""
    Z = double_cover(M)
    n = M.n
    if not alpha_rcdd(Z) > 0:
        raise Singular("boosted matrix is not strictly RCDD")
    inner = RcddZSolver(Z, config)
    iters = [0]

    def solve(rhs):
        big = np.concatenate([rhs, -rhs], axis=0)
        y, rep = inner.solve(big, eps)
        iters[0] += rep.iterations
        return 0.5 * (y[:n] - y[n:])

    return solve, iters


def solve_rcdd_general(A, b, eps=1e-8, config=None, power_iters=20, seed=0):
    """x with ||x - A^{-1}b||_2 <= eps ||A^{-1}b||_2 for an invertible RCDD matrix.

    Positive off-diagonal entries are handled by the double cover; the
    diagonal boost alpha D is derived from a power-iteration estimate of
    ||A^{-1}||_2 and residual correction rounds certify the final answer.
    """
    timer = Timer()
    A = as_sparse(A)
    n = A.n
    b = _vec(b, n)
    a = alpha_rcdd(A)
    if not a >= 0:
        raise BadParameter("matrix is not RCDD")
    if not np.any(b):
        return np.zeros_like(b), SolveReport(0, 0.0, eps, timer.elapsed(), "rcdd-general")
    diag = A.diagonal()
    r, u = float(diag.min()), float(diag.max())
    if r <= 0:
        raise Singular("zero diagonal entry in RCDD matrix")
    D = sp.diags(diag)
    config = lenient(config)
    normA = _norm2_upper(A.csr)
    inner = clamp_eps(min(1e-6, eps))

    # ||A^{-1}||_2 by power iteration on (A^T A)^{-1}, using lightly boosted solves
    boost0 = max(a, 0.0) if a > 0 else min(1e-6, eps)
    M0 = SparseMatrix(A.csr + (boost0 if a <= 0 else 0.0) * D)
    solve0, it0 = _cover_solver(M0, inner, config)
    solve0T, it0T = _cover_solver(M0.T, inner, config)
    v = np.random.default_rng([seed, 7]).standard_normal(n)
    v /= np.linalg.norm(v)
    nu = 1.0 / r
    for _ in range(power_iters):
        w = solve0T(solve0(v))
        nw = np.linalg.norm(w)
        if not math.isfinite(nw) or nw == 0:
            break
        nu = math.sqrt(nw)
        v = w / nw
    if not math.isfinite(nu) or nu * normA > 1e15:
        raise Singular("matrix is numerically singular (condition estimate %.3g)" % (nu * normA))

    eps_hat = eps / normA
    alpha = 0.5 * eps_hat * r / (4.0 * nu * nu * u * u)
    total_iters = it0[0] + it0T[0]
    target = eps * np.linalg.norm(b, axis=0) / (2.0 * nu * normA)
    history = []
    x = np.zeros_like(b)
    for attempt in range(12):
        M = SparseMatrix(A.csr + alpha * D)
        inner = clamp_eps(alpha * eps_hat * r / (2.0 * (1.0 + alpha)))
        solve, its = _cover_solver(M, inner, config)
        for _ in range(REFINE_ROUNDS):
            res_vec = b - A.csr @ x
            res = np.linalg.norm(res_vec, axis=0)
            history.append(float(np.max(res / np.linalg.norm(b, axis=0))))
            if np.all(res <= target):
                break
            x = x + solve(res_vec)
        total_iters += its[0]
        res = np.linalg.norm(b - A.csr @ x, axis=0)
        if np.all(res <= target):
            break
        alpha *= 0.5
    rep = SolveReport(total_iters, float(np.max(res / np.linalg.norm(b, axis=0))), eps,
                      timer.elapsed(), "rcdd-general",
                      {"alpha": alpha, "inv_norm_estimate": nu, "norm_upper": normA,
                       "residual_history": history})
    if not np.all(res <= target):
        raise NoConvergence("residual did not certify the requested accuracy", rep)
    return x, rep


def solve_lap_pinv(L, b, eps=1e-6, M_bound=None, seed=0, config=None, stationary=None):
    """Approximate L^+ b for a strongly connected directed Laplacian.

    Guarantee: ``||x - L^+ b||_2 <= eps ||L^+ b||_2``.  ``stationary`` may
    supply a walk stationary estimate already accurate to eps / (32 n kappa(D)).
    """
    from .pagerank_mixing import estimate_tpp, refine_stationary, lpinv_bounds
    from .stationary import compute_stationary

    timer = Timer()
    L = as_laplacian(L)
    n = L.n
    if not strongly_connected(L):
        raise NotConnected("pseudoinverse solver needs a strongly connected graph")
    b = _vec(b, n)
    b = b - b.mean(axis=0)
    if n <= 1 or not np.any(b):
        return np.zeros_like(b), SolveReport(0, 0.0, eps, timer.elapsed(), "lap-pinv")
    d = L.diag
    kd = float(d.max() / d.min())
    W = random_walk_matrix(L)
    IW = walk_laplacian(W)
    est = None
    config = lenient(config)
    if M_bound is None:
        est = estimate_tpp(W, seed=seed, config=config)
        M_bound = lpinv_bounds(est.kappa_tilde, n)["l2_upper"]
    eps1 = eps / kd
    alpha = eps1 / (6.0 * M_bound * math.sqrt(n))
    # the stationary call below runs at alpha / (3n); keep that representable
    alpha = max(alpha, 3.0 * n * ALPHA_FLOOR)
    st = compute_stationary(IW, alpha / (3.0 * n), config=config)
    X = st.s / IW.diag
    Msys = AlphaRcddSolver((IW.csr + alpha * sp.identity(n)) @ sp.diags(X), alpha / (3.0 * n),
                           config)
    eps2 = clamp_eps(eps1 * alpha ** 3 / (120.0 * n ** 3.5))

    # residual correction on (I - W) z = b: each round solves the boosted system
    z = np.zeros_like(b)
    history = []
    iters = 0
    target = eps1 * np.linalg.norm(b) / (3.0 * math.sqrt(n) * M_bound)
    for _ in range(REFINE_ROUNDS):
        r = b - IW.csr @ z
        history.append(float(np.linalg.norm(r) / np.linalg.norm(b)))
        if np.linalg.norm(r) <= target:
            break
        y, rep = Msys.solve(r, eps2)
        iters += rep.iterations
        z = z + X * y
    if stationary is None:
        sp_est, _ = refine_stationary(W, eps1 / (32.0 * n), seed=seed, estimate=est,
                                      config=config)
    else:
        sp_est = np.asarray(stationary, dtype=float)
    sh = sp_est / np.linalg.norm(sp_est)
    z = z - sh * (sh @ z)
    x = z / d
    # minimum-norm representative: remove the component along ker(L) = span(D^{-1} s)
    kvec = sp_est / d
    kvec /= np.linalg.norm(kvec)
    x = x - kvec * (kvec @ x)
    res = float(np.linalg.norm(L.csr @ x - b) / np.linalg.norm(b))
    rep = SolveReport(iters, res, eps, timer.elapsed(), "lap-pinv",
                      {"alpha": alpha, "M_bound": M_bound, "kappa_D": kd,
                       "residual_history": history, "stationary_rounds": st.iterations})
    return x, rep


def _ghost_laplacian(T):
    """Strongly connected Laplacian on n+1 vertices whose leading block is T.

    T is a column diagonally dominant Z-matrix with a positive column
    surplus everywhere; each column routes its surplus to a ghost vertex,
    which sends unit weight uniformly back to every vertex.
    """
    T = sp.csr_matrix(T)
    n = T.shape[0]
    tau = T.diagonal()
    sigma = -(np.asarray(T.sum(axis=0)).ravel() - tau)
    surplus = np.maximum(tau - sigma, 0.0)
    L = sp.bmat([[T, sp.csr_matrix(np.full((n, 1), -1.0 / n))],
                 [sp.csr_matrix(-surplus[None, :]), sp.csr_matrix([[1.0]])]], format="csr")
    mat = SparseMatrix(L)
    return DirectedLaplacian(mat, mat.diagonal())


def _dd_kind(csr):
    diag = csr.diagonal()
    a = abs(csr)
    row = np.asarray(a.sum(axis=1)).ravel() - np.abs(diag)
    col = np.asarray(a.sum(axis=0)).ravel() - np.abs(diag)
    tol = 1e-12 * max(np.abs(diag).max(), 1e-300)
    if np.all(diag >= -tol) and np.all(diag - col >= -tol):
        return "cdd"
    if np.all(diag >= -tol) and np.all(diag - row >= -tol):
        return "rdd"
    raise BadParameter("matrix is neither row nor column diagonally dominant")


def solve_dd(M, b, eps=1e-6, config=None, K_cap=2.0 ** 64):
    """x with ||M x - b||_2 <= eps ||b||_2 for a row or column diagonally dominant M."""
    from .stationary import compute_stationary

    timer = Timer()
    config = lenient(config)
    M = as_sparse(M)
    n = M.n
    b = _vec(b, n)
    nb = float(np.linalg.norm(b))
    if nb == 0:
        return np.zeros_like(b), SolveReport(0, 0.0, eps, timer.elapsed(), "dd")
    kind = _dd_kind(M.csr)
    csr = M.csr if kind == "cdd" else M.csr.T.tocsr()
    # after the transpose both cases are column dominant; the RDD case solves with M^T-scaling
    d = csr.diagonal().copy()
    dpos = d > 0
    dsafe = np.where(dpos, d, 1.0)
    kd = float(d[dpos].max() / d[dpos].min()) if np.any(dpos) else 1.0
    Mhat = csr @ sp.diags(1.0 / dsafe)           # unit (or zero) diagonal, column dominant
    eps1 = eps / kd
    Md = M.csr
    inner = clamp_eps(min(eps, 1e-6))
    history = []
    iters = 0
    x = np.zeros_like(b)
    j = 0
    res = math.inf
    prev_alpha = None
    K = 1.0
    while True:
        K = 2.0 ** (2.0 ** j)
        if K > K_cap:
            break
        alpha = max(eps1 / (6.0 * kd * K * n), 12.0 * (n + 1) * ALPHA_FLOOR)
        if alpha == prev_alpha:
            break                      # the floor was reached: larger K changes nothing
        prev_alpha = alpha
        # scaling from the half-boosted sign-negated matrix; the other half of
        # the boost covers the slack added by the stationary certificate
        off = Mhat - sp.diags(Mhat.diagonal())
        T = sp.diags(Mhat.diagonal() + 0.5 * alpha) - abs(off)
        G = _ghost_laplacian(T)
        a2 = 0.5 * alpha / (3.0 * (n + 1) * float(G.diag.max()))
        st = compute_stationary(G, a2, config=config)
        s = (st.s / G.diag)[:n]
        s = s / s.max()
        Mt = Mhat + alpha * sp.identity(n)
        # the scaled matrix is strictly RCDD, so its double cover is solved
        # directly and the residual loop below does the certification
        if kind == "cdd":
            # (alpha I + Mhat) S y = b,  x = D^{-1} S y
            cover, its = _cover_solver(SparseMatrix(Mt @ sp.diags(s)), inner, config)

            def step(r):
                return s * cover(r) / dsafe
        else:
            # M = D Mhat^T; (alpha I + Mhat^T) x = D^{-1} b, scaled on the left by S
            cover, its = _cover_solver(SparseMatrix(sp.diags(s) @ Mt.T), inner, config)

            def step(r):
                return cover(s * (r / dsafe))
        last = math.inf
        for _ in range(DD_ROUNDS):
            r = b - Md @ x
            res = float(np.linalg.norm(r) / nb)
            history.append(res)
            if res <= eps or res > 0.7 * last:
                break
            last = res
            x = x + step(r)
        iters += its[0]
        res = float(np.linalg.norm(b - Md @ x) / nb)
        if res <= eps:
            break
        j += 1
    rep = SolveReport(iters, res, eps, timer.elapsed(), "dd",
                      {"kind": kind, "K": K, "residual_history": history})
    if not res <= eps:
        raise NoConvergence("no K up to the cap certified the residual", rep)
    return x, rep
