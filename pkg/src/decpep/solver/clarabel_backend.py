"""In-process interior-point backend (Clarabel)."""

from __future__ import annotations

import time

import clarabel
import numpy as np
import scipy.sparse as sp

from decpep.solver.conic import reduce
from decpep.solver.data import SdpData, Solution

_SQRT2 = np.sqrt(2.0)

_STATUS = {
    "Solved": "optimal",
    "PrimalInfeasible": "infeasible",
    "AlmostPrimalInfeasible": "infeasible",
    "DualInfeasible": "unbounded",
    "AlmostDualInfeasible": "unbounded",
}


def _svec_scaling(n: int) -> np.ndarray:
    """Per-entry scale turning upper-triangle entries into Clarabel's svec."""
    jl, il = np.tril_indices(n)
    return np.where(il == jl, 1.0, _SQRT2)


def _smat(v: np.ndarray, n: int) -> np.ndarray:
    jl, il = np.tril_indices(n)
    M = np.zeros((n, n))
    M[il, jl] = v / _svec_scaling(n)
    return M + np.triu(M, 1).T


def solve_clarabel(data: SdpData, feas_tol: float = 1e-8, rel_gap: float = 1e-8,
                   max_iter: int = 500, verbose: bool = False) -> Solution:
    cf = reduce(data)
    parts = [cf.A_eq, cf.A_in]
    b_parts = [cf.b_eq, cf.b_in]
    cones = []
    if len(cf.b_eq):
        cones.append(clarabel.ZeroConeT(len(cf.b_eq)))
    if len(cf.b_in):
        cones.append(clarabel.NonnegativeConeT(len(cf.b_in)))
    for t in cf.psd:
        sc = sp.diags(_svec_scaling(t.n))
        parts.append(sc @ t.F)
        b_parts.append(sc @ t.g)
        cones.append(clarabel.PSDTriangleConeT(t.n))
    Amat = sp.vstack(parts, format="csc")
    b = np.concatenate(b_parts)
    P = sp.csc_matrix((cf.n, cf.n))

    settings = clarabel.DefaultSettings()
    settings.verbose = verbose
    settings.tol_feas = feas_tol
    settings.tol_gap_rel = rel_gap
    settings.tol_gap_abs = rel_gap
    settings.max_iter = max_iter

    t0 = time.perf_counter()
    sol = clarabel.DefaultSolver(P, -cf.c, Amat, b, cones, settings).solve()
    elapsed = time.perf_counter() - t0

    x = np.asarray(sol.x, dtype=float)
    z = np.asarray(sol.z, dtype=float)
    n_eq, n_in = len(cf.b_eq), len(cf.b_in)
    z_psd, pos = [], n_eq + n_in
    for t in cf.psd:
        m = t.n * (t.n + 1) // 2
        z_psd.append(_smat(z[pos: pos + m], t.n))
        pos += m
    full, duals = cf.expand(x, z[:n_eq], z[n_eq: n_eq + n_in], z_psd)

    status = _STATUS.get(str(sol.status), "numerical-limit")
    blocks, free = data.unpack(full)
    _, _, rhs, _ = data.matrices()
    if status == "unbounded":
        obj = np.inf
    elif status == "infeasible":
        obj = -np.inf
    else:
        obj = data.objective_value(blocks, free)
    return Solution(
        status=status,
        objective=obj,
        blocks=tuple(blocks),
        free=free,
        duals=duals,
        solve_time=elapsed,
        dual_objective=float(rhs @ duals) + data.objective_offset,
        solver="clarabel",
        message=str(sol.status),
    )
