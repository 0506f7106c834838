"""Stationary distributions through a sequence of alpha-RCDD solves.

Each round adds the entrywise minimal slack ``e`` that makes ``(E + L) X``
alpha-RCDD, solves ``(E + L) X z = D^{-1} e / ||D^{-1} e||_1`` and rescales
``x <- X z``.  The excess ``||D^{-1}(e - alpha d)||_1`` contracts by a
constant factor per round, so ``O(log 1/alpha)`` rounds give a scaling
``x`` with ``L X`` close to Eulerian; ``s = D x / ||D x||_1``.
"""
import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import BadParameter, BadScaling, CertificateFailed, NotConnected
from .graph_core import (SparseMatrix, alpha_rcdd, as_laplacian, strongly_connected)
from .eulerian_solver import EulerianConfig
from .rcdd_solver import clamp_eps, solve_alpha_rcdd
from .report import Timer

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class StationaryResult:
    s: np.ndarray
    x_final: np.ndarray
    e_final: np.ndarray
    alpha: float
    iterations: int
    certificate_alpha_rcdd: bool
    excess_history: list = field(default_factory=list)
    kappa: float = 1.0
    wall_time: float = 0.0


def minimal_slack(L, x, alpha):
    """Entrywise minimal e >= 0 with (diag(e) + L) diag(x) alpha-RCDD."""
    L = as_laplacian(L)
    x = np.asarray(x, dtype=float)
    if x.shape != (L.n,) or not np.all(x > 0) or not np.all(np.isfinite(x)):
        raise BadScaling("scaling vector must be finite and strictly positive")
    d = L.diag
    AT = L.adjacency_T()
    row = (AT @ x) / x
    return np.maximum(alpha * d, -d + (1.0 + alpha) * row)


def certificate_matrix(L, s, alpha):
    """(3 alpha n D + L) D^{-1} S."""
    L = as_laplacian(L)
    n = L.n
    d = L.diag
    M = (L.csr + sp.diags(3.0 * alpha * n * d)) @ sp.diags(np.asarray(s) / d)
    return SparseMatrix(M)


def check_certificate(L, s, alpha):
    return alpha_rcdd(certificate_matrix(L, s, alpha)) >= alpha * (1.0 - 1e-9)


def _excess(e, d, alpha):
    return float(np.sum((e - alpha * d) / d))


def compute_stationary(L, alpha, eps_inner=None, config=None, rounds=None,
                       require_connected=True, check_contraction=True):
    """Approximate stationary distribution and certified Eulerian scaling."""
    timer = Timer()
    L = as_laplacian(L)
    n = L.n
    if not (0 < alpha < 0.5):
        raise BadParameter("alpha must lie in (0, 1/2), got %r" % (alpha,))
    if require_connected and not strongly_connected(L):
        raise NotConnected("stationary computation needs a strongly connected graph")
    d = L.diag
    if n == 1:
        one = np.ones(1)
        return StationaryResult(one, one / max(d[0], 1.0), np.zeros(1), alpha, 0, True)
    if np.any(d <= 0):
        raise NotConnected("vertex with zero out-degree")
    eps = alpha * alpha * 1e-6 / (n * n)
    if eps_inner is not None:
        eps = min(eps, eps_inner)
    eps = clamp_eps(eps)
    # inner solves may stop at the float64 residual floor; the contraction
    # check and the final certificate decide whether the result is usable
    cfg = replace(config or EulerianConfig(), strict=False)
    k = rounds if rounds is not None else int(math.ceil(8.0 * math.log(1.0 / alpha)))

    x = 1.0 / d
    e = minimal_slack(L, x, alpha)
    history = [_excess(e, d, alpha)]
    t = 0
    certified = False
    Lc = L.csr
    s = d * x / np.sum(d * x)
    while True:
        if t >= k:
            certified = check_certificate(L, s, alpha)
            if certified or t >= 2 * k:
                break
        De = e / d
        g = De / De.sum()
        M = SparseMatrix((Lc + sp.diags(e)) @ sp.diags(x))
        z, _ = solve_alpha_rcdd(M, g, alpha, eps, cfg)
        if not np.all(z > 0):
            # roundoff can leave tiny nonpositive entries; the exact solution is positive
            floor = 1e-300 + 1e-14 * np.max(np.abs(z))
            z = np.maximum(z, floor)
        x = x * z
        x *= n / np.sum(d * x)
        e = minimal_slack(L, x, alpha)
        t += 1
        cur = _excess(e, d, alpha)
        prev = history[-1]
        history.append(cur)
        bound = max(0.875 * prev, 2.0 * alpha * n)
        # allowance for inexact inner solves at the rounding floor
        if check_contraction and cur > bound + 10.0 * alpha * n + 1e-12 * n:
            log.warning("round %d excess %.3g exceeds contraction bound %.3g", t, cur, bound)
            raise CertificateFailed("excess %.3g exceeded contraction bound %.3g in round %d"
                                    % (cur, bound, t))
        s = d * x / np.sum(d * x)
    if not certified:
        raise CertificateFailed("certificate not reached after %d rounds (excess %.3g)"
                                % (t, history[-1]))
    return StationaryResult(s, x, e, alpha, t, True, history, float(s.max() / s.min()),
                            timer.elapsed())
