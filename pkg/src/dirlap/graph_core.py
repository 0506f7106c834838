"""Sparse matrix model, directed Laplacians and random walk matrices.

Conventions: an edge ``i -> j`` of weight ``w`` contributes ``-w`` to
``L[j, i]`` and ``+w`` to ``L[i, i]``, so ``L = D - A^T`` with ``D`` the
out-degree diagonal and every column of ``L`` sums to zero.  The random
walk matrix ``W = A^T D^{-1}`` is column stochastic: ``W[j, i]`` is the
probability of stepping from ``i`` to ``j``.
"""
import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from .errors import (InvalidWeight, IsolatedVertex, NotLaplacian, ParseError,
                     SelfLoop, VertexIndexError)

LAPLACIAN_TOL = 1e-12
EULERIAN_TOL = 1e-12
STOCHASTIC_TOL = 1e-12


class SparseMatrix:
    """Square sparse matrix with canonical, zero-free storage.

    Both a CSR and a CSC copy are built eagerly so row and column
    traversals cost the same.
    """

    def __init__(self, data):
        if isinstance(data, SparseMatrix):
            data = data.csr
        if sp.issparse(data):
            m = sp.csr_matrix(data, dtype=np.float64, copy=True)
        else:
            m = sp.csr_matrix(np.asarray(data, dtype=np.float64))
        if m.shape[0] != m.shape[1]:
            raise ValueError("matrix must be square, got shape %s" % (m.shape,))
        m.sum_duplicates()
        m.eliminate_zeros()
        m.sort_indices()
        self.csr = m
        self.csc = m.tocsc()
        self.csc.sort_indices()

    @classmethod
    def from_entries(cls, n, entries):
        entries = list(entries)
        if not entries:
            return cls(sp.csr_matrix((n, n)))
        rows, cols, vals = zip(*entries)
        return cls(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))

    @property
    def n(self):
        return self.csr.shape[0]

    @property
    def shape(self):
        return self.csr.shape

    @property
    def nnz(self):
        return self.csr.nnz

    @property
    def entries(self):
        coo = self.csr.tocoo()
        return [(int(i), int(j), float(v)) for i, j, v in zip(coo.row, coo.col, coo.data)]

    @property
    def T(self):
        return SparseMatrix(self.csr.T)

    def diagonal(self):
        return self.csr.diagonal()

    def toarray(self):
        return self.csr.toarray()

    def offdiag(self):
        m = self.csr.tolil(copy=True)
        m.setdiag(0)
        return sp.csr_matrix(m)

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix(self.csr @ other.csr)
        return self.csr @ other

    def __rmatmul__(self, other):
        return other @ self.csr

    def __eq__(self, other):
        if not isinstance(other, SparseMatrix) or other.shape != self.shape:
            return NotImplemented
        return (self.csr != other.csr).nnz == 0

    def __repr__(self):
        return "SparseMatrix(n=%d, nnz=%d)" % (self.n, self.nnz)


def as_sparse(M):
    if isinstance(M, SparseMatrix):
        return M
    if isinstance(M, (DirectedLaplacian, RandomWalkMatrix)):
        return M.mat
    return SparseMatrix(M)


@dataclass(frozen=True, eq=False)
class DirectedLaplacian:
    mat: SparseMatrix
    diag: np.ndarray

    @property
    def n(self):
        return self.mat.n

    @property
    def csr(self):
        return self.mat.csr

    def adjacency_T(self):
        """A^T, i.e. the negated off-diagonal part of L."""
        return -self.mat.offdiag()

    def num_edges(self):
        return self.adjacency_T().nnz

    def edges(self):
        """Summed edge multiset as sorted (from, to, weight) triples."""
        coo = self.adjacency_T().tocoo()
        out = [(int(i), int(j), float(w)) for j, i, w in zip(coo.row, coo.col, coo.data)]
        return sorted(out)

    def toarray(self):
        return self.mat.toarray()

    def __matmul__(self, other):
        return self.mat.csr @ other


@dataclass(frozen=True, eq=False)
class RandomWalkMatrix:
    mat: SparseMatrix

    @property
    def n(self):
        return self.mat.n

    @property
    def csr(self):
        return self.mat.csr

    def toarray(self):
        return self.mat.toarray()

    def __matmul__(self, other):
        return self.mat.csr @ other


@dataclass(frozen=True)
class GraphDiagnostics:
    is_z_matrix: bool
    is_laplacian: bool
    is_eulerian: bool
    strongly_connected: bool
    alpha_rcdd: float

    def to_dict(self):
        a = self.alpha_rcdd
        if math.isinf(a):
            a = "inf" if a > 0 else "-inf"
        return {
            "is_z_matrix": self.is_z_matrix,
            "is_laplacian": self.is_laplacian,
            "is_eulerian": self.is_eulerian,
            "strongly_connected": self.strongly_connected,
            "alpha_rcdd": a,
        }


def _check_index(i, n):
    if isinstance(i, float) and not float(i).is_integer():
        raise VertexIndexError("vertex index %r is not an integer" % (i,))
    i = int(i)
    if i < 0 or i >= n:
        raise VertexIndexError("vertex index %d out of range [0, %d)" % (i, n))
    return i


def from_edge_list(edges, n):
    """Build ``L`` from ``(from, to, weight)`` triples; parallel edges add up."""
    n = int(n)
    rows, cols, vals = [], [], []
    deg = np.zeros(n)
    for e in edges:
        if len(e) != 3:
            raise ParseError("edge must be (from, to, weight), got %r" % (e,))
        u, v, w = e
        u = _check_index(u, n)
        v = _check_index(v, n)
        w = float(w)
        if not math.isfinite(w) or w <= 0:
            raise InvalidWeight("edge %d->%d has weight %r; weights must be positive" % (u, v, w))
        if u == v:
            raise SelfLoop("self-loop at vertex %d is not allowed" % u)
        rows.append(v)
        cols.append(u)
        vals.append(-w)
        deg[u] += w
    rows.extend(range(n))
    cols.extend(range(n))
    vals.extend(deg)
    mat = SparseMatrix(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))
    return DirectedLaplacian(mat, mat.diagonal())


def parse_edge_list(text):
    """Parse the whitespace edge-list format.  Returns ``(edges, n)``."""
    edges = []
    n_header = None
    max_idx = -1
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip().replace(" ", "")
            if body.startswith("n="):
                try:
                    n_header = int(body[2:])
                except ValueError:
                    raise ParseError("line %d: bad vertex count header %r" % (lineno, raw))
            continue
        parts = line.split()
        if len(parts) != 3:
            raise ParseError("line %d: expected 'u v w', got %r" % (lineno, raw))
        try:
            u, v, w = int(parts[0]), int(parts[1]), float(parts[2])
        except ValueError:
            raise ParseError("line %d: cannot parse %r" % (lineno, raw))
        if u < 0 or v < 0:
            raise VertexIndexError("line %d: negative vertex index" % lineno)
        if u == v:
            raise SelfLoop("line %d: self-loop at vertex %d" % (lineno, u))
        max_idx = max(max_idx, u, v)
        edges.append((u, v, w))
    n = n_header if n_header is not None else max_idx + 1
    if n_header is not None and max_idx >= n_header:
        raise VertexIndexError("vertex %d exceeds declared n=%d" % (max_idx, n_header))
    return edges, n


def read_edge_list(path):
    with open(path) as fh:
        edges, n = parse_edge_list(fh.read())
    return from_edge_list(edges, n)


def format_edge_list(L):
    lines = ["# n=%d" % L.n]
    lines += ["%d %d %r" % e for e in L.edges()]
    return "\n".join(lines) + "\n"


def _offdiag_abs_sums(csr):
    a = abs(csr)
    d = np.abs(csr.diagonal())
    row = np.asarray(a.sum(axis=1)).ravel() - d
    col = np.asarray(a.sum(axis=0)).ravel() - d
    return np.maximum(row, 0.0), np.maximum(col, 0.0)


def alpha_rcdd(M):
    """Largest alpha with M alpha-RCDD; +inf without off-diagonals, -inf if none."""
    csr = as_sparse(M).csr
    diag = csr.diagonal()
    row, col = _offdiag_abs_sums(csr)
    best = math.inf
    for off in (row, col):
        pos = off > 0
        if np.any(diag[pos] <= 0):
            return -math.inf
        if np.any(diag[~pos] < 0):
            return -math.inf
        if np.any(pos):
            best = min(best, float(np.min(diag[pos] / off[pos])) - 1.0)
    return best if best >= 0 else -math.inf


def is_alpha_rcdd(M, alpha, rtol=1e-12):
    a = alpha_rcdd(M)
    return a >= alpha - rtol * max(1.0, abs(alpha))


def is_z_matrix(M):
    off = as_sparse(M).offdiag()
    return bool(off.nnz == 0 or off.data.max() <= 0)


def _is_laplacian(csr):
    if not is_z_matrix(csr):
        return False
    colsum = np.asarray(csr.sum(axis=0)).ravel()
    colabs = np.asarray(abs(csr).sum(axis=0)).ravel()
    return bool(np.all(np.abs(colsum) <= LAPLACIAN_TOL * np.maximum(colabs, 1e-300)))


def _is_eulerian(csr):
    if csr.shape[0] == 0:
        return True
    rowsum = np.asarray(csr.sum(axis=1)).ravel()
    scale = np.max(np.abs(csr.diagonal()))
    return bool(np.max(np.abs(rowsum)) <= EULERIAN_TOL * scale)


def _strongly_connected_csr(csr):
    n = csr.shape[0]
    if n <= 1:
        return True
    ncomp, _ = connected_components(csr, directed=True, connection="strong")
    return ncomp == 1


def validate(M):
    """Diagnostics evaluated directly from the matrix class definitions."""
    csr = as_sparse(M).csr
    z = is_z_matrix(csr)
    lap = z and _is_laplacian(csr)
    eul = lap and _is_eulerian(csr)
    off = as_sparse(csr).offdiag()
    return GraphDiagnostics(
        is_z_matrix=z,
        is_laplacian=lap,
        is_eulerian=eul,
        strongly_connected=_strongly_connected_csr(off),
        alpha_rcdd=alpha_rcdd(csr),
    )


def as_laplacian(M):
    """Accept a DirectedLaplacian or any matrix passing the Laplacian check."""
    if isinstance(M, DirectedLaplacian):
        return M
    mat = as_sparse(M)
    if not _is_laplacian(mat.csr):
        raise NotLaplacian("matrix is not a directed Laplacian (Z-matrix with zero column sums)")
    return DirectedLaplacian(mat, mat.diagonal())


def is_eulerian(L):
    L = as_laplacian(L)
    return _is_eulerian(L.csr)


def strongly_connected(L):
    return _strongly_connected_csr(as_sparse(L).offdiag())


def random_walk_matrix(L):
    """W = A^T D^{-1}."""
    L = as_laplacian(L)
    d = L.diag
    if np.any(d <= 0):
        i = int(np.flatnonzero(d <= 0)[0])
        raise IsolatedVertex("vertex %d has no outgoing edges" % i)
    W = L.adjacency_T() @ sp.diags(1.0 / d)
    return RandomWalkMatrix(SparseMatrix(W))


def as_walk(W):
    if isinstance(W, RandomWalkMatrix):
        return W
    mat = as_sparse(W)
    if mat.nnz and mat.csr.data.min() < 0:
        raise NotLaplacian("random walk matrix must be entrywise nonnegative")
    colsum = np.asarray(mat.csr.sum(axis=0)).ravel()
    if np.any(np.abs(colsum - 1.0) > 1e-9):
        raise NotLaplacian("random walk matrix columns must sum to one")
    return RandomWalkMatrix(mat)


def walk_laplacian(W):
    """I - W as a directed Laplacian (its diagonal is 1 - W_ii)."""
    W = as_walk(W)
    n = W.n
    mat = SparseMatrix(sp.identity(n, format="csr") - W.csr)
    return DirectedLaplacian(mat, mat.diagonal())


def laplacian_from_walk(W, d):
    """Rebuild L = (I - W) D from a walk matrix and out-degrees."""
    W = as_walk(W)
    M = (sp.identity(W.n, format="csr") - W.csr) @ sp.diags(np.asarray(d, dtype=float))
    mat = SparseMatrix(M)
    return DirectedLaplacian(mat, mat.diagonal())


def symmetrization(M):
    m = as_sparse(M).csr
    return SparseMatrix(0.5 * (m + m.T))


def scale_columns(M, x):
    """M diag(x)."""
    return SparseMatrix(as_sparse(M).csr @ sp.diags(np.asarray(x, dtype=float)))


def scale_rows(M, x):
    return SparseMatrix(sp.diags(np.asarray(x, dtype=float)) @ as_sparse(M).csr)


def add_diagonal(M, e):
    m = as_sparse(M).csr
    return SparseMatrix(m + sp.diags(np.broadcast_to(np.asarray(e, dtype=float), (m.shape[0],))))


def stationary_from_scaling(d, x):
    s = np.asarray(d) * np.asarray(x)
    return s / s.sum()
