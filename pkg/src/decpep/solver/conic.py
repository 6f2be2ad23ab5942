"""Reduction of :class:`SdpData` to a compact conic form shared by backends.

Every PSD block becomes an affine matrix expression ``X_b = g_b - F_b x``
over a reduced variable ``x``.  Blocks that are pinned entry-by-entry by
equality rows (LMI slack blocks) are not variables: their defining
expressions enter the cone directly.  Linearly dependent equality rows are
dropped so the KKT systems stay nonsingular.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from decpep.solver.data import SdpData


@dataclass
class PsdTerm:
    block: int
    n: int
    F: sp.csr_matrix  # rows: upper-triangle column-major entries
    g: np.ndarray
    rows: np.ndarray | None  # defining rows (pinned blocks) or None
    coef: np.ndarray | None


@dataclass
class ConicForm:
    """maximize c.x  s.t.  A_eq x = b_eq,  A_in x <= b_in,  g_b - F_b x PSD."""

    data: SdpData
    T: sp.csr_matrix  # stacked original variable (pinned blocks zeroed) = T x
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    eq_rows: np.ndarray
    A_in: sp.csr_matrix
    b_in: np.ndarray
    in_rows: np.ndarray
    psd: list[PsdTerm]

    @property
    def n(self) -> int:
        return self.T.shape[1]

    def expand(self, x: np.ndarray, z_eq, z_in, z_psd) -> tuple[np.ndarray, np.ndarray]:
        """Full stacked variable and per-row duals of the original data.

        ``z_psd`` holds one dual matrix per PSD term (dense symmetric).
        """
        d = self.data
        offsets, free0 = d.layout()
        full = self.T @ x
        duals = np.zeros(d.n_rows)
        duals[self.eq_rows] = z_eq
        duals[self.in_rows] = z_in
        for t, Z in zip(self.psd, z_psd):
            if t.rows is None:
                continue
            m = t.n * (t.n + 1) // 2
            full[offsets[t.block]: offsets[t.block] + m] = t.g - t.F @ x
            jl, il = np.tril_indices(t.n)
            w = np.where(il == jl, 1.0, 2.0)
            duals[t.rows] = w * Z[il, jl] / t.coef
        return full, duals


def pinned_blocks(data: SdpData) -> dict[int, np.ndarray]:
    """Blocks fully determined by equality rows: ``{block: row per entry}``.

    A block qualifies when it is absent from the objective and each of its
    entries occurs in exactly one row, an equality that touches no other
    qualifying block.
    """
    sizes = data.block_sizes
    in_obj = {b for b, *_ in data.objective.entries}
    owner: dict[tuple, list[int]] = {}
    for r, row in enumerate(data.rows):
        for b, i, j, c in row.functional.entries:
            if b > 0:
                owner.setdefault((b, i, j), []).append(r)
    out = {}
    for b in range(1, len(sizes)):
        n = sizes[b]
        if b in in_obj or n == 0:
            continue
        jl, il = np.tril_indices(n)
        rows = []
        for i, j in zip(il, jl):
            rs = owner.get((b, int(i), int(j)), [])
            if len(rs) != 1 or data.rows[rs[0]].relation != "==":
                break
            rows.append(rs[0])
        else:
            if len(set(rows)) == len(rows):
                out[b] = np.array(rows)
    for b, rows in list(out.items()):
        for r in rows:
            if len({e[0] for e in data.rows[r].functional.entries if e[0] in out}) != 1:
                out.pop(b)
                break
    return out


def independent_rows(M: sp.spmatrix, b: np.ndarray, tol: float = 1e-9) -> np.ndarray:
    """Indices of a maximal linearly independent subset of the rows of ``M``.

    Raises ``ValueError`` if a dropped row's right-hand side disagrees with the kept ones.
    """
    m = M.shape[0]
    if m == 0:
        return np.arange(0)
    D = M.toarray()
    _, R, piv = sla.qr(D.T, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    rank = int(np.sum(diag > tol * max(diag.max(initial=0.0), 1.0)))
    keep = np.sort(piv[:rank])
    if rank < m:
        drop = np.setdiff1d(np.arange(m), keep)
        coef, *_ = np.linalg.lstsq(D[keep].T, D[drop].T, rcond=None)
        gap = np.abs(coef.T @ b[keep] - b[drop])
        if gap.max() > 1e-7 * max(1.0, np.abs(b).max()):
            raise ValueError("inconsistent equality constraints")
    return keep


def _free_basis(A: sp.csr_matrix, c: np.ndarray, cols: np.ndarray) -> np.ndarray | None:
    """Orthonormal basis of the row space of ``A[:, cols]`` when it is a strict
    subspace that ``c`` does not leave; None otherwise."""
    if len(cols) == 0:
        return None
    _, sv, Vt = np.linalg.svd(A[:, cols].toarray(), full_matrices=False)
    r = int(np.sum(sv > 1e-10 * max(sv.max(initial=0.0), 1.0)))
    if r == len(cols):
        return None
    B = Vt[:r].T
    leak = c[cols] - B @ (B.T @ c[cols])
    # a leaking objective means the problem is unbounded; let the solver say so
    return B if np.abs(leak).max(initial=0.0) <= 1e-12 * max(1.0, np.abs(c).max()) else None


def reduce(data: SdpData) -> ConicForm:
    c, A, rhs, rel = data.matrices()
    A = A.tocsr()
    offsets, free0 = data.layout()
    nvar = free0 + data.n_free
    sizes = data.block_sizes
    pinned = pinned_blocks(data)

    keep = np.ones(nvar, dtype=bool)
    for b in pinned:
        keep[offsets[b]: offsets[b] + sizes[b] * (sizes[b] + 1) // 2] = False
    block_cols = np.flatnonzero(keep[:free0])
    free_cols = np.arange(free0, nvar)
    eye = sp.identity(nvar, format="csc")
    # free values may carry a lineality (a constant added to every value of one
    # function); restricting them to their row space gives [A; F] full column rank
    B = _free_basis(A, c, free_cols)
    if B is None:
        T = eye[:, np.concatenate([block_cols, free_cols])]
    else:
        embed = sp.csr_matrix((B.ravel(), (np.repeat(free_cols, B.shape[1]),
                                            np.tile(np.arange(B.shape[1]), len(free_cols)))),
                              shape=(nvar, B.shape[1]))
        T = sp.hstack([eye[:, block_cols], embed])
    T = T.tocsr()
    Ak = (A @ T).tocsr()

    defining = np.zeros(data.n_rows, dtype=bool)
    for rows in pinned.values():
        defining[rows] = True
    eq = np.flatnonzero((rel == "==") & ~defining)
    eq = eq[independent_rows(Ak[eq], rhs[eq])]
    ineq = np.flatnonzero(rel == "<=")

    psd = []
    for b, n in enumerate(sizes):
        if n == 0:
            continue
        m = n * (n + 1) // 2
        idx = offsets[b] + np.arange(m)
        if b in pinned:
            rows = pinned[b]
            coef = np.asarray(A[rows, idx]).ravel()
            inv = sp.diags(1.0 / coef)
            # coef * X_e + rest x = rhs  ->  X_e = rhs / coef - (rest / coef) x
            psd.append(PsdTerm(b, n, (inv @ Ak[rows]).tocsr(), rhs[rows] / coef, rows, coef))
        else:
            psd.append(PsdTerm(b, n, (-T[idx]).tocsr(), np.zeros(m), None, None))
    return ConicForm(data, T, T.T @ c, Ak[eq], rhs[eq], eq, Ak[ineq], rhs[ineq], ineq, psd)
