"""Random instance generators shared by the test modules."""
import numpy as np

from dirlap.graph_core import from_edge_list, random_walk_matrix, SparseMatrix, as_laplacian
from dirlap.oracles import dense_stationary


def random_digraph(n, rng, p=None, wmin=0.5, wmax=2.0, max_edges=None):
    """Strongly connected weighted digraph: a random Hamiltonian cycle plus extra arcs."""
    perm = rng.permutation(n)
    edges = {}
    for i in range(n):
        edges[(int(perm[i]), int(perm[(i + 1) % n]))] = rng.uniform(wmin, wmax)
    if p is None:
        p = min(1.0, 3.0 / max(n - 1, 1))
    extra = rng.random((n, n)) < p
    for u, v in zip(*np.nonzero(extra)):
        if u != v and (max_edges is None or len(edges) < max_edges):
            edges.setdefault((int(u), int(v)), rng.uniform(wmin, wmax))
    return from_edge_list([(u, v, w) for (u, v), w in sorted(edges.items())], n)


def eulerian_rescaled(L):
    """L D^{-1} S for the exact stationary s: an Eulerian Laplacian."""
    W = random_walk_matrix(L)
    s = dense_stationary(W.toarray())
    M = (np.eye(L.n) - W.toarray()) * s[None, :]
    # exact zero column sums: diagonal rebuilt from the off-diagonal column sums
    off = M - np.diag(np.diag(M))
    diag = -off.sum(axis=0)
    M = off + np.diag(diag)
    return as_laplacian(SparseMatrix(M))


def random_eulerian(n, rng, **kw):
    return eulerian_rescaled(random_digraph(n, rng, **kw))


def random_undirected(n, rng, **kw):
    """Undirected Laplacian built from the symmetrised arcs of random_digraph."""
    A = random_digraph(n, rng, **kw).adjacency_T().toarray()
    A = A + A.T
    return as_laplacian(SparseMatrix(np.diag(A.sum(axis=0)) - A))


def random_rcdd_z(n, rng, alpha=0.1, p=0.4):
    """Random Z-matrix that is exactly alpha-RCDD (the binding row or column is tight)."""
    off = -rng.uniform(0.2, 1.0, (n, n)) * (rng.random((n, n)) < p)
    np.fill_diagonal(off, 0.0)
    need = np.maximum(-off.sum(axis=0), -off.sum(axis=1))
    need = np.where(need == 0, 1.0, need)
    return off + np.diag((1.0 + alpha) * need)


def random_rcdd_mixed(n, rng, alpha=0.1, p=0.4):
    """Like random_rcdd_z but with random signs on the off-diagonal entries."""
    A = random_rcdd_z(n, rng, alpha, p)
    signs = np.where(rng.random((n, n)) < 0.5, -1.0, 1.0)
    np.fill_diagonal(signs, 1.0)
    return A * signs


def complete_graph(n):
    return from_edge_list([(u, v, 1.0) for u in range(n) for v in range(n) if u != v], n)


def cycle(n):
    return from_edge_list([(i, (i + 1) % n, 1.0) for i in range(n)], n)


def walk(L):
    return random_walk_matrix(L)
