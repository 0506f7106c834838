"""Ground-truth engines used by the test suite.

Everything here works directly from definitions with dense linear algebra
or simulation and never calls the solvers of this package.
"""
from dataclasses import dataclass

import numpy as np

from .errors import Nonterminating, TooLarge

DENSE_CAP = 200
MC_STEP_CAP = 10 ** 9
MIX_CAP = 10 ** 6


@dataclass(frozen=True)
class McEstimate:
    mean: float
    stderr: float
    trials: int
    seed: int


def _dense(W):
    if hasattr(W, "toarray"):
        return np.asarray(W.toarray(), dtype=float)
    return np.asarray(W, dtype=float)


def _cap(n, cap):
    if n > cap:
        raise TooLarge("dense oracle limited to n <= %d (got %d)" % (cap, n))


def dense_pinv(M, cap=DENSE_CAP):
    """Moore-Penrose pseudoinverse with singular values below 1e-12 * max dropped."""
    A = _dense(M)
    _cap(max(A.shape), cap)
    U, sv, Vt = np.linalg.svd(A, full_matrices=False)
    if sv.size == 0 or sv[0] == 0:
        return np.zeros(A.T.shape)
    keep = sv > 1e-12 * sv[0]
    return (Vt[keep].T / sv[keep]) @ U[:, keep].T


def dense_stationary(W):
    """Kernel of I - W normalised to the simplex (for strongly connected walks)."""
    P = _dense(W)
    n = P.shape[0]
    M = np.eye(n) - P
    M[-1, :] = 1.0
    rhs = np.zeros(n)
    rhs[-1] = 1.0
    return np.linalg.solve(M, rhs)


def dense_hitting_times(W, v):
    """h[u] = expected steps from u to v, from h_v = 0, h_u = 1 + sum_j P(u->j) h_j."""
    P = _dense(W).T
    n = P.shape[0]
    A = np.eye(n) - P
    b = np.ones(n)
    A[v, :] = 0.0
    A[v, v] = 1.0
    b[v] = 0.0
    return np.linalg.solve(A, b)


def dense_commute_times(W):
    n = _dense(W).shape[0]
    H = np.column_stack([dense_hitting_times(W, v) for v in range(n)])
    return H + H.T


def dense_escape(W, u, v):
    """p[w] = probability a walk from w reaches u before v."""
    P = _dense(W).T
    n = P.shape[0]
    A = np.eye(n) - P
    b = np.zeros(n)
    for t, val in ((u, 1.0), (v, 0.0)):
        A[t, :] = 0.0
        A[t, t] = 1.0
        b[t] = val
    return np.linalg.solve(A, b)


def dense_ppr(W, p, beta):
    P = _dense(W)
    n = P.shape[0]
    return beta * np.linalg.solve(np.eye(n) - (1 - beta) * P, np.asarray(p, dtype=float))


def column_norm_pinv(W):
    """(||(I-W)^+||_1, ||(I-W)^+||_2) computed densely."""
    P = _dense(W)
    Lp = dense_pinv(np.eye(P.shape[0]) - P)
    return float(np.abs(Lp).sum(axis=0).max()), float(np.linalg.norm(Lp, 2))


class _Sampler:
    """Next-state sampling for a column-stochastic W by a global cumulative table."""

    def __init__(self, W):
        P = _dense(W)
        n = P.shape[0]
        cum, tgt = [], []
        for i in range(n):
            nz = np.flatnonzero(P[:, i] > 0)
            if nz.size == 0:
                nz = np.array([i])
                probs = np.array([1.0])
            else:
                probs = P[nz, i] / P[nz, i].sum()
            c = np.cumsum(probs)
            c[-1] = 1.0
            cum.append(i + c)
            tgt.append(nz)
        self.cum = np.concatenate(cum)
        self.tgt = np.concatenate(tgt)

    def step(self, pos, rng):
        r = np.minimum(rng.random(pos.size), 1.0 - 1e-12)
        idx = np.searchsorted(self.cum, pos + r, side="right")
        return self.tgt[idx]


def _run(W, start, stop_mask, trials, seed, step_cap, value_fn, chunk=200_000):
    sampler = _Sampler(W)
    rng = np.random.default_rng(seed)
    out = np.empty(trials)
    done = 0
    while done < trials:
        m = min(chunk, trials - done)
        pos = np.full(m, start, dtype=np.int64)
        steps = np.zeros(m)
        alive = np.flatnonzero(~stop_mask[pos])
        t = 0
        while alive.size:
            t += 1
            if t > step_cap:
                raise Nonterminating("walk exceeded %d steps" % step_cap)
            pos[alive] = sampler.step(pos[alive], rng)
            steps[alive] = t
            alive = alive[~stop_mask[pos[alive]]]
        out[done:done + m] = value_fn(pos, steps)
        done += m
    return out


def _estimate(samples, seed):
    trials = samples.size
    se = float(samples.std(ddof=1) / np.sqrt(trials)) if trials > 1 else 0.0
    return McEstimate(float(samples.mean()), se, trials, seed)


def mc_hitting(W, u, v, trials=100_000, seed=0, step_cap=MC_STEP_CAP):
    n = _dense(W).shape[0]
    if u == v:
        return McEstimate(0.0, 0.0, trials, seed)
    stop = np.zeros(n, dtype=bool)
    stop[v] = True
    samples = _run(W, u, stop, trials, seed, step_cap, lambda pos, steps: steps)
    return _estimate(samples, seed)


def mc_escape(W, u, v, start, trials=100_000, seed=0, step_cap=MC_STEP_CAP):
    n = _dense(W).shape[0]
    stop = np.zeros(n, dtype=bool)
    stop[[u, v]] = True
    samples = _run(W, start, stop, trials, seed, step_cap,
                   lambda pos, steps: (pos == u).astype(float))
    return _estimate(samples, seed)


MIX_SLACK = 1e-12  # ties at exactly 1/2 (e.g. K4) must not flip on roundoff


def _max_column_l1(M, s):
    return float(np.abs(M - s[:, None]).sum(axis=0).max())


def brute_tmix(W, cap=MIX_CAP):
    """Smallest k with every column of (lazy W)^k within 1/2 of s in l1."""
    P = _dense(W)
    n = P.shape[0]
    _cap(n, DENSE_CAP)
    s = dense_stationary(P)
    lazy = 0.5 * (np.eye(n) + P)
    M = np.eye(n)
    for k in range(1, cap + 1):
        M = lazy @ M
        if _max_column_l1(M, s) <= 0.5 + MIX_SLACK:
            return k
    raise Nonterminating("t_mix exceeds %d" % cap)


def brute_tpp(W, cap=MIX_CAP):
    """Smallest k such that M_pp(1/k) is within 1/2 of s1^T columnwise in l1."""
    P = _dense(W)
    n = P.shape[0]
    _cap(n, DENSE_CAP)
    s = dense_stationary(P)
    I = np.eye(n)
    for k in range(1, cap + 1):
        beta = 1.0 / k
        M = beta * np.linalg.solve(I - (1 - beta) * P, I)
        if _max_column_l1(M, s) <= 0.5 + MIX_SLACK:
            return k
    raise Nonterminating("t_pp exceeds %d" % cap)


def power_stationary(W, tol=1e-12, max_iter=10 ** 7):
    """Power iteration on the lazy walk until the l1 change drops below tol."""
    P = _dense(W)
    n = P.shape[0]
    lazy = 0.5 * (np.eye(n) + P)
    x = np.full(n, 1.0 / n)
    for _ in range(max_iter):
        y = lazy @ x
        y /= y.sum()
        if np.abs(y - x).sum() <= tol:
            return y
        x = y
    raise Nonterminating("power iteration did not reach tol=%g" % tol)
