"""Interior-point solver built on CVXOPT.

Two mappings are available.  The dual mapping hands CVXOPT the row
multipliers as its variables and our PSD blocks as its dual cone variable;
PEPs have far fewer rows than Gram entries, so this is the fast one.  The
primal mapping (reduced Gram entries as variables) is the fallback.
"""

from __future__ import annotations

import time

import numpy as np
import scipy.sparse as sp

from decpep.solver.conic import independent_rows, reduce
from decpep.solver.data import SdpData, Solution

_STATUS = {
    "optimal": "optimal",
    "primal infeasible": "infeasible",
    "dual infeasible": "unbounded",
}
# in the dual mapping CVXOPT's primal is our dual
_STATUS_SWAPPED = {
    "optimal": "optimal",
    "primal infeasible": "unbounded",
    "dual infeasible": "infeasible",
}


def _spmatrix(M: sp.spmatrix, shape=None):
    from cvxopt import spmatrix

    M = M.tocoo()
    shape = shape or M.shape
    return spmatrix(M.data.tolist(), M.row.tolist(), M.col.tolist(), shape)


def _full_vec(F: sp.csr_matrix, g: np.ndarray, n: int):
    """Map upper-triangle rows to CVXOPT's column-major full-matrix rows."""
    jl, il = np.tril_indices(n)  # entry (il, jl) with il <= jl
    upper = jl * n + il
    lower = il * n + jl
    P = sp.coo_matrix((np.ones(len(il)), (upper, np.arange(len(il)))), shape=(n * n, len(il)))
    Q = sp.coo_matrix((np.ones(len(il)), (lower, np.arange(len(il)))), shape=(n * n, len(il)))
    off = il != jl
    Q = sp.coo_matrix((Q.data[off], (Q.row[off], Q.col[off])), shape=Q.shape)
    E = (P + Q).tocsr()
    return E @ F, E @ g


def _trace_embed(n: int) -> sp.csr_matrix:
    """Full column-major storage of the symmetric M with <M, X> equal to the
    coefficient vector applied to the upper-triangle entries of X."""
    jl, il = np.tril_indices(n)
    off = il != jl
    rows = np.concatenate([jl * n + il, (il * n + jl)[off]])
    cols = np.concatenate([np.arange(len(il)), np.flatnonzero(off)])
    vals = np.concatenate([np.where(off, 0.5, 1.0), np.full(off.sum(), 0.5)])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n * n, len(il)))


def _sym(Z: np.ndarray) -> np.ndarray:
    L = np.tril(Z)
    return L + np.tril(L, -1).T


def _sdp(c, Gs, hs, opts, kw, kkts):
    """solvers.sdp trying the KKT solvers in order until one gives a verdict."""
    from cvxopt import solvers

    res, message = None, "cvxopt: no attempt"
    for kkt in kkts:
        extra = {"kktsolver": kkt} if kkt else {}
        try:
            res = solvers.sdp(c, Gs=Gs, hs=hs, options=opts, **extra, **kw)
            message = res["status"]
        except (ValueError, ArithmeticError) as exc:
            res, message = None, f"cvxopt: {exc}"
        if message in _STATUS:
            break
    return res, message


def _solve_dual(data: SdpData, opts: dict):
    """(status, message, blocks, free, duals), or None when this mapping does not apply."""
    from cvxopt import matrix

    c, A, rhs, rel = data.matrices()
    A = A.tocsr()
    offsets, free0 = data.layout()
    free_cols = np.arange(free0, free0 + data.n_free)

    eq = np.flatnonzero(rel == "==")
    eq = eq[independent_rows(A[eq], rhs[eq])]
    ineq = np.flatnonzero(rel == "<=")
    rows = np.concatenate([ineq, eq])
    Ar = A[rows]
    m = len(rows)

    # free values enter through their row space only
    Af = Ar[:, free_cols].toarray()
    B = np.zeros((len(free_cols), 0))
    if len(free_cols):
        _, sv, Vt = np.linalg.svd(Af, full_matrices=False)
        r = int(np.sum(sv > 1e-10 * max(sv.max(initial=0.0), 1.0)))
        B = Vt[:r].T
        cf = c[free_cols]
        if np.abs(cf - B @ (B.T @ cf)).max(initial=0.0) > 1e-12 * max(1.0, np.abs(c).max()):
            return None

    Gs, hs, placed = [], [], []
    for b, (_, n) in enumerate(data.blocks):
        if n == 0:
            continue
        E = _trace_embed(n)
        cols = offsets[b] + np.arange(n * (n + 1) // 2)
        Gs.append(_spmatrix(E @ Ar[:, cols].T, (n * n, m)))
        hs.append(matrix(-(E @ c[cols]).reshape(n, n, order="F")))
        placed.append(b)
    kw = {}
    if len(ineq):
        kw["Gl"] = _spmatrix(sp.eye(len(ineq), m, format="csr"))
        kw["hl"] = matrix(np.zeros(len(ineq)))
    if B.shape[1]:
        kw["A"] = matrix(B.T @ Af.T)
        kw["b"] = matrix(-(B.T @ c[free_cols]))

    # ldl2 can stall for hundreds of iterations on this mapping, chol does not
    res, message = _sdp(matrix(-rhs[rows]), Gs, hs, opts, kw, ("chol", None))
    if message not in _STATUS_SWAPPED:
        return None
    status = _STATUS_SWAPPED[message]
    if status != "optimal":
        return status, message, None, None, None
    blocks = [np.zeros((n, n)) for _, n in data.blocks]
    for b, Z in zip(placed, res["zs"]):
        blocks[b] = _sym(np.array(Z))
    free = B @ np.array(res["y"]).ravel() if B.shape[1] else np.zeros(data.n_free)
    duals = np.zeros(data.n_rows)
    duals[rows] = -np.array(res["x"]).ravel()
    return status, message, blocks, free, duals


def _solve_primal(data: SdpData, opts: dict):
    from cvxopt import matrix

    cf = reduce(data)
    n = cf.n
    Gs, hs = [], []
    for t in cf.psd:
        # s = h - G x = vec(X) with X = g - F x  ->  G = F, h = g
        Fv, gv = _full_vec(t.F, t.g, t.n)
        Gs.append(_spmatrix(Fv, (t.n * t.n, n)))
        hs.append(matrix(gv.reshape(t.n, t.n, order="F")))
    kw = {}
    if len(cf.b_in):
        kw["Gl"] = _spmatrix(cf.A_in, (len(cf.b_in), n))
        kw["hl"] = matrix(cf.b_in)
    if len(cf.b_eq):
        kw["A"] = _spmatrix(cf.A_eq, (len(cf.b_eq), n))
        kw["b"] = matrix(cf.b_eq)

    # ldl2 is about twice as fast as the default QR-based KKT solver here
    res, message = _sdp(matrix(-cf.c), Gs, hs, opts, kw, ("ldl2", None))
    if res is None or res["x"] is None or res["zs"] is None:
        x = np.zeros(n)
        z_eq, z_in = np.zeros(len(cf.b_eq)), np.zeros(len(cf.b_in))
        z_psd = [np.zeros((t.n, t.n)) for t in cf.psd]
    else:
        x = np.array(res["x"]).ravel()
        z_eq = np.array(res["y"]).ravel() if len(cf.b_eq) else np.zeros(0)
        z_in = np.array(res["zl"]).ravel() if len(cf.b_in) else np.zeros(0)
        z_psd = [np.array(Z) for Z in res["zs"]]
    full, duals = cf.expand(x, z_eq, z_in, z_psd)
    blocks, free = data.unpack(full)
    return _STATUS.get(message, "numerical-limit"), message, blocks, free, duals


def solve_cvxopt(data: SdpData, feas_tol: float = 1e-8, rel_gap: float = 1e-8,
                 max_iter: int = 500, verbose: bool = False) -> Solution:
    opts = {"show_progress": verbose, "abstol": rel_gap, "reltol": rel_gap,
            "feastol": feas_tol, "maxiters": max_iter}
    t0 = time.perf_counter()
    try:
        out = _solve_dual(data, opts)
    except ValueError:  # inconsistent equalities and the like; the primal path reports them
        out = None
    if out is None or out[0] != "optimal":
        # certificates and failures are settled on the primal mapping
        out = _solve_primal(data, opts)
    status, message, blocks, free, duals = out
    elapsed = time.perf_counter() - t0

    _, _, rhs, _ = data.matrices()
    if status == "unbounded":
        obj = np.inf
    elif status == "infeasible":
        obj = -np.inf
    else:
        obj = data.objective_value(blocks, free)
    return Solution(status, obj, tuple(blocks), free, duals, elapsed,
                    float(rhs @ duals) + data.objective_offset, "cvxopt", message)
