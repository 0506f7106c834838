"""Symmetric diagonally dominant solves exposed as a pseudoinverse operator."""
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import NotSDD, NotSymmetric
from .graph_core import as_sparse
from .report import SolveReport, Timer

DEFAULT_TOL = 1e-10
BACKENDS = ("dense_factorization", "pcg")


@dataclass(frozen=True, eq=False)
class PinvOperator:
    """x -> approximately U^+ x.  ``apply`` accepts vectors or n-by-k blocks."""

    n: int
    apply: Callable
    rand_tag: int
    tol: float
    backend: str = "dense_factorization"
    matrix: np.ndarray = field(default=None, repr=False)

    def __call__(self, x):
        return self.apply(x)


def _check_sdd(csr):
    n = csr.shape[0]
    if n == 0:
        return
    asym = abs(csr - csr.T)
    scale = max(abs(csr).max(), 1e-300)
    if asym.nnz and asym.max() > 1e-12 * scale:
        raise NotSymmetric("matrix is not symmetric (max asymmetry %.3g)" % asym.max())
    diag = csr.diagonal()
    off = np.asarray(abs(csr).sum(axis=1)).ravel() - np.abs(diag)
    slack = diag - off
    if np.any(slack < -1e-12 * scale):
        i = int(np.argmin(slack))
        raise NotSDD("row %d violates diagonal dominance (diag %.6g, off-diagonal sum %.6g)"
                     % (i, diag[i], off[i]))


def _components(csr):
    n = csr.shape[0]
    ncomp, labels = connected_components(csr, directed=False)
    return [np.flatnonzero(labels == c) for c in range(ncomp)]


def _laplacian_block(block):
    off = block - np.diag(np.diag(block))
    if np.any(off > 0):
        return False
    rows = block.sum(axis=1)
    return bool(np.all(np.abs(rows) <= 1e-12 * max(np.abs(block).max(), 1e-300)))


def _dense_block_pinv(block):
    k = block.shape[0]
    if k == 1:
        d = block[0, 0]
        return np.array([[1.0 / d]]) if d > 0 else np.zeros((1, 1)), d <= 0
    if _laplacian_block(block):
        # ground vertex 0, factor the reduced block, then project onto 1-perp
        red = block[1:, 1:]
        c = sla.cho_factor(red, lower=True, check_finite=False)
        G = np.zeros((k, k))
        G[1:, 1:] = sla.cho_solve(c, np.eye(k - 1), check_finite=False)
        P = np.eye(k) - 1.0 / k
        out = P @ G @ P
        return 0.5 * (out + out.T), True
    try:
        c = sla.cho_factor(block, lower=True, check_finite=False)
        out = sla.cho_solve(c, np.eye(k), check_finite=False)
        return 0.5 * (out + out.T), False
    except np.linalg.LinAlgError:
        w, V = np.linalg.eigh(block)
        keep = w > 1e-12 * max(abs(w).max(), 1e-300)
        return (V[:, keep] / w[keep]) @ V[:, keep].T, True


def _dense_pinv(csr):
    n = csr.shape[0]
    full = csr.toarray()
    P = np.zeros((n, n))
    for idx in _components(csr):
        block = full[np.ix_(idx, idx)]
        Pb, _ = _dense_block_pinv(block)
        P[np.ix_(idx, idx)] = Pb
    return P


def _kernel_projector(csr):
    """Per-component mean removal for Laplacian components (identity elsewhere)."""
    full = None
    groups = []
    for idx in _components(csr):
        if len(idx) == 1:
            if csr[idx[0], idx[0]] <= 0:
                groups.append(idx)
            continue
        if full is None:
            full = csr.toarray()
        if _laplacian_block(full[np.ix_(idx, idx)]):
            groups.append(idx)

    def project(x):
        x = np.array(x, dtype=float, copy=True)
        for idx in groups:
            if len(idx) == 1 and csr[idx[0], idx[0]] <= 0:
                x[idx] = 0.0
            else:
                x[idx] -= x[idx].mean(axis=0)
        return x

    return project


def _pcg(csr, b, tol, maxiter, delay=4):
    """Jacobi-preconditioned CG with a delayed energy-norm error estimate."""
    diag = csr.diagonal().copy()
    diag[diag <= 0] = 1.0
    x = np.zeros_like(b)
    r = b.copy()
    z = r / diag
    p = z.copy()
    rz = rz0 = r @ z
    if rz <= 0:
        return x, 0
    terms = []
    total = 0.0
    hist = [x.copy()]
    it = 0
    for it in range(1, maxiter + 1):
        Ap = csr @ p
        pAp = p @ Ap
        if pAp <= 0:
            break
        a = rz / pAp
        x = x + a * p
        r = r - a * Ap
        terms.append(a * rz)
        total += a * rz
        hist.append(x)
        if len(hist) > delay + 1:
            hist.pop(0)
        if len(terms) >= delay:
            tail = sum(terms[-delay:])
            if tail <= tol * tol * total:
                break
        z = r / diag
        rz_new = r @ z
        if rz_new <= 1e-28 * rz0:
            # residual at roundoff level; further steps only add noise
            break
        p = z + (rz_new / rz) * p
        rz = rz_new
    return x, it


def build_sdd_operator(U, tol=DEFAULT_TOL, backend="dense_factorization", rand_tag=0):
    """Operator approximating U^+ for a symmetric SDD matrix U."""
    if backend not in BACKENDS:
        raise ValueError("unknown backend %r" % (backend,))
    csr = as_sparse(U).csr
    _check_sdd(csr)
    n = csr.shape[0]
    project = _kernel_projector(csr)
    if backend == "dense_factorization":
        P = _dense_pinv(csr)

        def apply(x):
            return P @ np.asarray(x, dtype=float)

        return PinvOperator(n, apply, rand_tag, tol, backend, P)

    inner = tol / 3.0
    scale = 1.0 / (1.0 - inner * inner)
    maxiter = 10 * n + 50

    def apply_vec(v):
        v = project(v)
        if not np.any(v):
            return np.zeros(n)
        y, _ = _pcg(csr, v, inner, maxiter)
        return scale * project(y)

    def apply(x):
        x = np.asarray(x, dtype=float)
        if x.ndim == 1:
            return apply_vec(x)
        return np.column_stack([apply_vec(x[:, j]) for j in range(x.shape[1])])

    return PinvOperator(n, apply, rand_tag, tol, backend, None)


def solve_sdd(U, b, tol=DEFAULT_TOL, backend="dense_factorization"):
    timer = Timer()
    csr = as_sparse(U).csr
    op = build_sdd_operator(csr, tol, backend)
    project = _kernel_projector(csr)
    bp = project(np.asarray(b, dtype=float))
    nb = np.linalg.norm(bp)
    if nb == 0:
        return np.zeros(csr.shape[0]), SolveReport(0, 0.0, tol, timer.elapsed(), backend)
    x = op.apply(bp)
    res = np.linalg.norm(csr @ x - bp) / nb
    return x, SolveReport(1, float(res), tol, timer.elapsed(), backend)
