"""Command-line front end.

Every command reads an edge-list file, runs one computation and writes a
JSON (or TSV) payload to stdout; diagnostics go to stderr.  Exit status is
0 on success, 2 for invalid input and 3 for convergence failures.
"""
import argparse
import hashlib
import json
import logging
import math
import sys

import numpy as np

from . import __version__
from .errors import BadParameter, DirLapError
from .graph_core import is_eulerian, random_walk_matrix, read_edge_list, validate

SCHEMA_VERSION = 1
COMMANDS = ("stationary", "pagerank", "solve", "pinv", "hitting", "escape", "commute",
            "sketch", "sketch-query", "diagnose")
NEEDS_PAIR = {"hitting", "escape", "commute", "sketch-query"}

log = logging.getLogger("dirlap")


class UsageError(BadParameter):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def build_parser():
    p = _Parser(prog="dirlap", description="Directed Laplacian solvers and random-walk quantities.")
    p.add_argument("--version", action="version", version="%(prog)s " + __version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    for name in COMMANDS:
        c = sub.add_parser(name)
        if name != "sketch-query":
            c.add_argument("input", help="edge-list file ('u v w' per line)")
        c.add_argument("--eps", type=float, default=None)
        c.add_argument("--alpha", type=float, default=None)
        c.add_argument("--beta", type=float, default=None)
        c.add_argument("--u", type=int, default=None)
        c.add_argument("--v", type=int, default=None)
        c.add_argument("--seed", type=int, default=0)
        c.add_argument("--format", choices=("json", "tsv"), default="json")
        c.add_argument("--rhs", default=None, help="file with one right-hand side entry per line")
        c.add_argument("--sketch", default=None, help="sketch file to query")
        c.add_argument("--out", default=None, help="where to write the sketch")
        c.add_argument("--oracle", action="store_true", help=argparse.SUPPRESS)
    return p


def _default_eps(cmd):
    return 0.2 if cmd == "sketch" else 1e-6


def _check_args(a):
    if a.command in NEEDS_PAIR and (a.u is None or a.v is None):
        raise UsageError("%s needs --u and --v" % a.command)
    if a.command == "sketch" and not a.out:
        raise UsageError("sketch needs --out")
    if a.command == "sketch-query" and not a.sketch:
        raise UsageError("sketch-query needs --sketch")
    if a.command in ("solve", "pinv") and a.rhs is None and (a.u is None or a.v is None):
        raise UsageError("%s needs --rhs or both --u and --v" % a.command)
    if not (a.eps > 0 and math.isfinite(a.eps)):
        raise UsageError("--eps must be positive")
    if a.beta is not None and not (0.0 < a.beta < 1.0):
        raise UsageError("--beta must lie in (0, 1)")
    if a.alpha is not None and not (0.0 < a.alpha < 0.5):
        raise UsageError("--alpha must lie in (0, 1/2)")


def _load(path):
    return read_edge_list(path)


def _read_rhs(path, n):
    with open(path) as fh:
        vals = [float(tok) for line in fh for tok in line.split() if not line.startswith("#")]
    if len(vals) != n:
        raise BadParameter("right-hand side has %d entries, expected %d" % (len(vals), n))
    return np.array(vals)


def _pair_rhs(n, u, v):
    for t in (u, v):
        if not (0 <= t < n):
            raise BadParameter("vertex %d out of range for n=%d" % (t, n))
    b = np.zeros(n)
    b[u] += 1.0
    b[v] -= 1.0
    return b


def _report(rep):
    # wall times would make stdout differ between identical runs
    return _strip_times(rep.to_dict() if hasattr(rep, "to_dict") else dict(rep))


def _strip_times(obj):
    if isinstance(obj, dict):
        return {k: _strip_times(v) for k, v in obj.items() if k != "wall_time"}
    if isinstance(obj, list):
        return [_strip_times(v) for v in obj]
    return obj


def _cmd_stationary(a, L):
    from .rcdd_solver import ALPHA_FLOOR
    from .stationary import compute_stationary
    alpha = a.alpha if a.alpha is not None else min(max(a.eps, ALPHA_FLOOR), 0.25)
    st = compute_stationary(L, alpha)
    result = {"s": st.s, "alpha": alpha, "kappa": st.kappa,
              "certificate_alpha_rcdd": st.certificate_alpha_rcdd}
    report = {"iterations": st.iterations, "excess_history": st.excess_history}
    return result, report


def _cmd_pagerank(a, L):
    from .pagerank_mixing import personalized_pagerank
    W = random_walk_matrix(L)
    beta = a.beta if a.beta is not None else 0.15
    if a.u is not None:
        if not (0 <= a.u < L.n):
            raise BadParameter("vertex %d out of range for n=%d" % (a.u, L.n))
        p = np.zeros(L.n)
        p[a.u] = 1.0
    else:
        p = np.full(L.n, 1.0 / L.n)
    x, rep = personalized_pagerank(W, p, beta, a.eps)
    return {"x": x, "beta": beta}, _report(rep)


def _rhs(a, n):
    return _read_rhs(a.rhs, n) if a.rhs is not None else _pair_rhs(n, a.u, a.v)


def _cmd_solve(a, L):
    from .eulerian_solver import solve_eulerian
    from .rcdd_solver import solve_dd
    b = _rhs(a, L.n)
    if is_eulerian(L):
        x, rep = solve_eulerian(L, b, a.eps, seed=a.seed)
        method = "eulerian"
    else:
        x, rep = solve_dd(L, b, a.eps)
        method = "dd"
    return {"x": x, "method": method}, _report(rep)


def _cmd_pinv(a, L):
    from .rcdd_solver import solve_lap_pinv
    b = _rhs(a, L.n)
    x, rep = solve_lap_pinv(L, b, a.eps, seed=a.seed)
    return {"x": x}, _report(rep)


def _context(a, W):
    from .walk_quantities import walk_context
    return walk_context(W, seed=a.seed)


def _ctx_report(ctx):
    return {"sigma": ctx.sigma, "M": ctx.M, "kappa_tilde": ctx.kappa, "meta": ctx.meta}


def _cmd_hitting(a, L):
    from .walk_quantities import hitting_time
    W = random_walk_matrix(L)
    ctx = _context(a, W)
    h = hitting_time(W, a.u, a.v, eps=a.eps, seed=a.seed, context=ctx)
    return {"hitting_time": h}, _ctx_report(ctx)


def _cmd_commute(a, L):
    from .walk_quantities import commute_time
    W = random_walk_matrix(L)
    ctx = _context(a, W)
    c = commute_time(W, a.u, a.v, eps=a.eps, seed=a.seed, context=ctx)
    return {"commute_time": c}, _ctx_report(ctx)


def _cmd_escape(a, L):
    from .walk_quantities import escape_probabilities
    W = random_walk_matrix(L)
    ctx = _context(a, W)
    res = escape_probabilities(W, a.u, a.v, eps=a.eps, seed=a.seed, context=ctx, return_raw=True)
    rep = _ctx_report(ctx)
    rep["raw"] = res.raw
    return {"p": res.p}, rep


def _cmd_sketch(a, L):
    from .walk_quantities import sketch
    W = random_walk_matrix(L)
    ctx = _context(a, W)
    S = sketch(W, eps=a.eps, seed=a.seed, context=ctx)
    data = S.to_bytes()
    with open(a.out, "wb") as fh:
        fh.write(data)
    result = {"path": a.out, "n": S.n, "k": S.k, "eps": S.eps, "patched": S.patched,
              "bytes": len(data), "sha256": hashlib.sha256(data).hexdigest()}
    rep = _ctx_report(ctx)
    rep["sketch"] = S.meta
    return result, rep


def _cmd_sketch_query(a, L):
    from .walk_quantities import CommuteSketch, sketch_query
    try:
        S = CommuteSketch.load(a.sketch)
    except ValueError as exc:
        raise BadParameter(str(exc))
    try:
        val = sketch_query(S, a.u, a.v)
    except IndexError as exc:
        raise BadParameter(str(exc))
    return {"commute_time_estimate": val}, {"k": S.k, "eps": S.eps, "n": S.n}


def _cmd_diagnose(a, L):
    return validate(L).to_dict(), {}


HANDLERS = {"stationary": _cmd_stationary, "pagerank": _cmd_pagerank, "solve": _cmd_solve,
            "pinv": _cmd_pinv, "hitting": _cmd_hitting, "escape": _cmd_escape,
            "commute": _cmd_commute, "sketch": _cmd_sketch,
            "sketch-query": _cmd_sketch_query, "diagnose": _cmd_diagnose}


def _oracle(a, L, result):
    """Dense reference values for debugging (small graphs only)."""
    from . import oracles
    A = L.toarray()
    if a.command in ("hitting", "commute", "escape", "stationary", "pagerank"):
        W = random_walk_matrix(L).toarray()
        if a.command == "hitting":
            return {"hitting_time": float(oracles.dense_hitting_times(W, a.v)[a.u])}
        if a.command == "commute":
            return {"commute_time": float(oracles.dense_commute_times(W)[a.u, a.v])}
        if a.command == "escape":
            return {"p": oracles.dense_escape(W, a.u, a.v)}
        if a.command == "stationary":
            return {"s": oracles.dense_stationary(W)}
        p = np.full(L.n, 1.0 / L.n)
        if a.u is not None:
            p = np.zeros(L.n)
            p[a.u] = 1.0
        return {"x": oracles.dense_ppr(W, p, a.beta if a.beta is not None else 0.15)}
    if a.command == "pinv":
        return {"x": oracles.dense_pinv(A) @ _rhs(a, L.n)}
    return {}


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        f = float(obj)
        if math.isnan(f):
            return "nan"
        if math.isinf(f):
            return "inf" if f > 0 else "-inf"
        return f
    return obj


def _params(a):
    keys = ("input", "eps", "alpha", "beta", "u", "v", "seed", "rhs", "sketch", "out")
    return {k: getattr(a, k, None) for k in keys}


def _tsv(payload):
    lines = []

    def emit(prefix, val):
        if isinstance(val, dict):
            for k in val:
                emit(prefix + "." + k if prefix else k, val[k])
        elif isinstance(val, list) and val and not isinstance(val[0], (dict, list)):
            for i, x in enumerate(val):
                lines.append("%s\t%d\t%s" % (prefix, i, json.dumps(x)))
        else:
            lines.append("%s\t%s" % (prefix, json.dumps(val)))

    emit("", payload)
    return "\n".join(lines) + "\n"


def _emit(payload, fmt, out):
    payload = _plain(payload)
    if fmt == "tsv":
        out.write(_tsv(payload))
    else:
        out.write(json.dumps(payload, sort_keys=True) + "\n")


def run(argv=None, out=None, err=None):
    """Run one command; returns the process exit status."""
    out = out or sys.stdout
    err = err or sys.stderr
    fmt = "json"
    command = None
    args = None
    try:
        args = build_parser().parse_args(argv)
        command = args.command
        fmt = args.format
        if args.eps is None:
            args.eps = _default_eps(command)
        _check_args(args)
        L = None if command == "sketch-query" else _load(args.input)
        result, report = HANDLERS[command](args, L)
        report = dict(report)
        report["seed"] = args.seed
        report["parameters"] = _params(args)
        payload = {"schema_version": SCHEMA_VERSION, "command": command, "result": result,
                   "report": report}
        if args.oracle and L is not None:
            payload["oracle"] = _oracle(args, L, result)
        _emit(payload, fmt, out)
        return 0
    except (DirLapError, OSError) as exc:
        code = exc.exit_code if isinstance(exc, DirLapError) else 2
        err.write("dirlap: %s: %s\n" % (type(exc).__name__, exc))
        report = {"parameters": _params(args) if args is not None else {}}
        rep = getattr(exc, "report", None)
        if rep is not None:
            report["solver"] = _report(rep)
        payload = {"schema_version": SCHEMA_VERSION, "command": command,
                   "error": {"type": type(exc).__name__, "message": str(exc),
                             "exit_code": code},
                   "report": report}
        _emit(payload, fmt, out)
        return code


def main():
    logging.basicConfig(level=logging.WARNING, stream=sys.stderr,
                        format="%(name)s: %(levelname)s: %(message)s")
    sys.exit(run())


if __name__ == "__main__":
    main()
