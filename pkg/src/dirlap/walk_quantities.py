"""Hitting times, escape probabilities, commute times and commute-time sketches.

Formulas, with ``L = I - W`` and ``s`` the stationary distribution:

* hitting time ``H_uv = (1 - 1_v / s_v)^T L^+ (1_u - 1_v)``;
* escape probabilities solve ``L^T p = c (1_u / s_u - 1_v / s_v)`` with
  ``p_u = 1, p_v = 0``; the solution is unique up to adding multiples of 1;
* commute time ``C_uv = H_uv + H_vu = ||C^{1/2} B L_b^+ (1_u - 1_v)||^2`` where
  ``L_b = L S`` is Eulerian and ``U_b = B^T C B`` is its symmetrization.

A sketch stores ``Y = Q C^{1/2} B L_b^+`` for a random sign matrix ``Q``.
"""
import io
import math
import struct
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import BadQuery, DimError, NotEulerian, VertexIndexError
from .eulerian_solver import incidence, solve_eulerian
from .graph_core import (SparseMatrix, as_laplacian, as_walk, is_eulerian, symmetrization,
                         walk_laplacian, RandomWalkMatrix)
from .pagerank_mixing import estimate_tpp, refine_stationary
from .rcdd_solver import clamp_eps, solve_dd, solve_lap_pinv

# sketch file: little-endian header, then Y (k x n, row major), then s (n)
SKETCH_MAGIC = b"DLSK"
SKETCH_VERSION = 1
_HEADER = struct.Struct("<4sIQQdQB7x")


@dataclass
class WalkContext:
    """Per-walk data reused across queries: mixing estimate, stationary, bounds."""
    W: RandomWalkMatrix
    s: np.ndarray
    sigma: float
    M: float
    kappa: float
    s_error: float
    meta: dict = field(default_factory=dict)


def walk_context(W, sigma=None, M=None, seed=0, config=None, s_eps=1e-12):
    W = as_walk(W)
    n = W.n
    meta = {}
    est = estimate_tpp(W, seed=seed, config=config)
    s, rep = refine_stationary(W, s_eps, seed=seed, estimate=est, config=config)
    if M is None:
        M = est.bounds["tmix_upper"]
        meta["M_source"] = "estimate_tpp"
    if sigma is None:
        sigma = max(float(s.min()) - s_eps, 0.5 * float(s.min()))
        meta["sigma_source"] = "refine_stationary"
    meta["kappa_tilde"] = est.kappa_tilde
    return WalkContext(W, s, float(sigma), float(M), est.kappa_tilde, s_eps, meta)


def _ctx(W, sigma, M, seed, config, context):
    if context is not None:
        return context
    return walk_context(W, sigma, M, seed, config)


def _check_pair(n, u, v):
    for t in (u, v):
        if not (0 <= int(t) < n):
            raise VertexIndexError("vertex %r out of range for n=%d" % (t, n))


def _lap_eps(eps, sigma, M, n):
    lg = max(math.log(max(n, 2)), 1.0)
    return eps * sigma / (16.0 * math.sqrt(2.0) * M * n ** 1.5 * lg)


def hitting_time(W, u, v, sigma=None, M=None, eps=1e-6, seed=0, config=None, context=None):
    """Expected number of steps for a walk from u to first reach v."""
    W = as_walk(W)
    n = W.n
    _check_pair(n, u, v)
    if u == v:
        return 0.0
    ctx = _ctx(W, sigma, M, seed, config, context)
    L = walk_laplacian(W)
    b = np.zeros(n)
    b[u], b[v] = 1.0, -1.0
    inner = clamp_eps(_lap_eps(eps, ctx.sigma, ctx.M, n))
    x, _ = solve_lap_pinv(L, b, inner, M_bound=_l2_bound(ctx), seed=seed, config=config,
                          stationary=ctx.s)
    return float(x.sum() - x[v] / ctx.s[v])


def _l2_bound(ctx):
    n = ctx.W.n
    lg = max(math.log2(max(n, 2)), 1.0)
    return 16.0 * n * lg * ctx.kappa


def commute_time(W, u, v, sigma=None, M=None, eps=1e-6, seed=0, config=None, context=None):
    W = as_walk(W)
    _check_pair(W.n, u, v)
    if u == v:
        return 0.0
    ctx = _ctx(W, sigma, M, seed, config, context)
    return (hitting_time(W, u, v, eps=eps, seed=seed, config=config, context=ctx)
            + hitting_time(W, v, u, eps=eps, seed=seed, config=config, context=ctx))


@dataclass(frozen=True, eq=False)
class EscapeResult:
    p: np.ndarray
    raw: np.ndarray


def escape_probabilities(W, u, v, sigma=None, M=None, eps=1e-6, seed=0, config=None,
                         context=None, return_raw=False):
    """p[w] = probability that a walk from w reaches u before v."""
    W = as_walk(W)
    n = W.n
    _check_pair(n, u, v)
    if u == v:
        raise BadQuery("escape probabilities need u != v")
    ctx = _ctx(W, sigma, M, seed, config, context)
    s = ctx.s
    g = np.zeros(n)
    g[u] = 1.0 / s[u]
    g[v] = -1.0 / s[v]
    g -= s * (s @ g) / (s @ s)
    LT = SparseMatrix(walk_laplacian(W).csr.T.tocsr())
    lg = max(math.log(max(n, 2)), 1.0)
    inner = clamp_eps(eps * ctx.sigma ** 3 / (2000.0 * ctx.M ** 2 * n * lg * lg))
    y, _ = solve_dd(LT, g, inner, config=config)
    raw = (y - y[v]) / (y[u] - y[v])
    p = np.clip(raw, 0.0, 1.0)
    if return_raw:
        return EscapeResult(p, raw)
    return p


@dataclass(frozen=True, eq=False)
class CommuteSketch:
    Y: np.ndarray
    k: int
    eps: float
    seed: int
    stationary_used: np.ndarray
    patched: bool
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.Y.shape[1]

    def query(self, u, v):
        return sketch_query(self, u, v)

    def to_bytes(self):
        buf = io.BytesIO()
        buf.write(_HEADER.pack(SKETCH_MAGIC, SKETCH_VERSION, self.n, self.k, float(self.eps),
                               int(self.seed), 1 if self.patched else 0))
        buf.write(np.ascontiguousarray(self.Y, dtype="<f8").tobytes())
        buf.write(np.ascontiguousarray(self.stationary_used, dtype="<f8").tobytes())
        return buf.getvalue()

    @classmethod
    def from_bytes(cls, data):
        if len(data) < _HEADER.size:
            raise ValueError("truncated sketch header")
        magic, version, n, k, eps, seed, patched = _HEADER.unpack_from(data, 0)
        if magic != SKETCH_MAGIC or version != SKETCH_VERSION:
            raise ValueError("not a sketch file (magic %r, version %d)" % (magic, version))
        need = _HEADER.size + 8 * (k * n + n)
        if len(data) != need:
            raise ValueError("sketch payload has %d bytes, expected %d" % (len(data), need))
        off = _HEADER.size
        Y = np.frombuffer(data, dtype="<f8", count=k * n, offset=off).reshape(k, n)
        Y = np.array(Y, order="F")
        s = np.frombuffer(data, dtype="<f8", count=n, offset=off + 8 * k * n).copy()
        return cls(Y, int(k), float(eps), int(seed), s, bool(patched))

    def save(self, path):
        with open(path, "wb") as fh:
            fh.write(self.to_bytes())

    @classmethod
    def load(cls, path):
        with open(path, "rb") as fh:
            return cls.from_bytes(fh.read())


def sketch_query(S, u, v):
    n = S.Y.shape[1]
    for t in (u, v):
        if not (0 <= int(t) < n):
            raise VertexIndexError("vertex %r out of range for n=%d" % (t, n))
    if u == v:
        return 0.0
    diff = S.Y[:, u] - S.Y[:, v]
    return float(diff @ diff)


def sketch_rows(m, eps):
    return int(math.ceil(2400.0 * math.log(max(m, 2)) / (eps * eps)))


def eulerian_from_stationary(W, s):
    """L_b = (I - W) S, with the diagonal taken from the column sums."""
    W = as_walk(W)
    s = np.asarray(s, dtype=float)
    off = (W.csr @ sp.diags(s)).tolil()
    off.setdiag(0.0)
    off = off.tocsr()
    off.eliminate_zeros()
    out = np.asarray(off.sum(axis=0)).ravel()
    mat = SparseMatrix(sp.diags(out) - off)
    return as_laplacian(mat)


def sketch_known_stationary(W, s, eps=0.2, seed=0, config=None, k=None, inner_eps=None,
                            chunk=20000):
    """Commute-time sketch for a walk whose stationary distribution is known exactly."""
    W = as_walk(W)
    n = W.n
    s = np.asarray(s, dtype=float)
    if s.shape != (n,) or np.any(s <= 0):
        raise DimError("stationary vector must be positive of length %d" % n)
    Lb = eulerian_from_stationary(W, s)
    if not is_eulerian(Lb):
        raise NotEulerian("(I - W) S is not Eulerian for the supplied stationary vector")
    m = Lb.num_edges()
    rows = int(k) if k is not None else sketch_rows(m, eps)
    B, a, b, w = incidence(symmetrization(Lb))
    if inner_eps is None:
        wmin = float(w.min()) if w.size else 1.0
        inner_eps = eps * eps * s.min() ** 3 * wmin ** 3 / (50.0 * n ** 4)
    inner_eps = clamp_eps(inner_eps)
    LT = as_laplacian(SparseMatrix(Lb.csr.T.tocsr()))
    # Y^T = (L_b^T)^+ B^T C^{1/2} Q^T: solve once per edge column, then mix by Q
    Z, rep = solve_eulerian(LT, np.asarray(B.T.todense()), inner_eps, config)
    Q_rng = np.random.default_rng([int(seed), 23])
    mrows = B.shape[0]
    # column-major in memory: queries read whole columns
    Y = np.empty((rows, n), order="F")
    scale = 1.0 / math.sqrt(rows)
    ZT = np.ascontiguousarray(Z.T)
    for start in range(0, rows, chunk):
        stop = min(rows, start + chunk)
        signs = Q_rng.integers(0, 2, size=(stop - start, mrows), dtype=np.int8)
        Q = (2.0 * signs - 1.0) * scale
        Y[start:stop] = Q @ ZT
    meta = {"inner_eps": inner_eps, "edges": int(m), "eulerian_iterations": rep.iterations}
    return CommuteSketch(Y, rows, float(eps), int(seed), s.copy(), False, meta)


def patch_stationary(W, M=None, sigma=None, eps=1e-4, seed=0, config=None, context=None):
    """Perturb W slightly so that it has an exactly known stationary distribution.

    The flow ``F_ji = W_ji s''_i`` of an estimate ``s''`` is balanced by adding
    direct arcs from vertices with excess inflow to vertices with excess
    outflow (greedy, in index order); the new stationary vector is the
    vertex outflow of the balanced flow.
    """
    W = as_walk(W)
    n = W.n
    ctx = _ctx(W, sigma, M, seed, config, context)
    s2 = ctx.s / ctx.s.sum()
    F = (W.csr @ sp.diags(s2)).tocsr()
    inflow = np.asarray(F.sum(axis=1)).ravel()
    outflow = np.asarray(F.sum(axis=0)).ravel()
    d = inflow - outflow
    pos = [i for i in range(n) if d[i] > 0]
    neg = [i for i in range(n) if d[i] < 0]
    add = {}
    rem = d.copy()
    i = j = 0
    while i < len(pos) and j < len(neg):
        a, b = pos[i], neg[j]
        f = min(rem[a], -rem[b])
        if f > 0:
            add[(b, a)] = add.get((b, a), 0.0) + f
        rem[a] -= f
        rem[b] += f
        if rem[a] <= 0:
            i += 1
        if rem[b] >= 0:
            j += 1
    if add:
        keys = list(add)
        extra = sp.csr_matrix(([add[k] for k in keys], ([k[0] for k in keys], [k[1] for k in keys])),
                              shape=(n, n))
        F = (F + extra).tocsr()
    st = np.asarray(F.sum(axis=0)).ravel()
    Wt = (F @ sp.diags(1.0 / st)).tocsr()
    # exact column sums: put any rounding excess on the largest entry of each column
    Wt = _renormalize_columns(Wt)
    total = st.sum()
    return RandomWalkMatrix(SparseMatrix(Wt)), st / total


def _renormalize_columns(Wt):
    Wc = Wt.tocsc()
    for c in range(Wc.shape[1]):
        lo, hi = Wc.indptr[c], Wc.indptr[c + 1]
        if hi > lo:
            vals = Wc.data[lo:hi]
            vals /= vals.sum()
    return Wc.tocsr()


def sketch(W, M=None, sigma=None, eps=0.2, seed=0, config=None, context=None, patch_eps=None):
    """All-pairs commute-time sketch for a general strongly connected walk."""
    W = as_walk(W)
    n = W.n
    ctx = _ctx(W, sigma, M, seed, config, context)
    if patch_eps is None:
        lg = max(math.log(max(n, 2)), 1.0)
        patch_eps = ctx.sigma ** 2 / (256.0 * n ** 3 * lg * lg * ctx.M ** 2) * eps / 2.0
    Wp, sp_exact = patch_stationary(W, eps=patch_eps, seed=seed, config=config, context=ctx)
    out = sketch_known_stationary(Wp, sp_exact, eps / 3.0, seed, config)
    meta = dict(out.meta)
    meta.update(ctx.meta)
    meta["patch_eps"] = patch_eps
    meta["patch_max_change"] = float(abs(Wp.csr - W.csr).max()) if n > 1 else 0.0
    meta["requested_eps"] = float(eps)
    return CommuteSketch(out.Y, out.k, out.eps, int(seed), sp_exact, True, meta)
