"""Consensus steps ``y_i = sum_j w_ij x_j`` inside a PEP.

Two representations are offered: exact substitution for a matrix fixed in
advance, and a relaxation over the whole class of symmetric generalized
doubly stochastic matrices whose non-unit eigenvalues lie in a given range.
The relaxation only sees Gram-level consequences of ``Y = (I_d kron W) X``:
equal agent means, symmetry of ``X^T Y`` and of its centered counterpart, and
the spectral LMIs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from decpep.core import LMI, Constraint, LinCombo, PepError, PepProblem, QuadExpr, VectorEquality, inner


@dataclass(frozen=True)
class SpectralRange:
    lam_minus: float
    lam_plus: float

    def __post_init__(self):
        if not -1.0 < self.lam_minus <= self.lam_plus < 1.0:
            raise PepError(f"need -1 < lam_minus <= lam_plus < 1, got [{self.lam_minus}, {self.lam_plus}]")

    @classmethod
    def symmetric(cls, lam: float) -> "SpectralRange":
        return cls(-lam, lam)

    @property
    def is_symmetric(self) -> bool:
        return self.lam_plus == -self.lam_minus

    @property
    def lam_max(self) -> float:
        return max(abs(self.lam_minus), abs(self.lam_plus))

    @property
    def is_singleton(self) -> bool:
        """The class reduces to the averaging matrix J."""
        return self.lam_minus == 0.0 and self.lam_plus == 0.0


@dataclass
class ConsensusGroup:
    """Consensus steps that share one unknown averaging matrix."""

    N: int
    range: SpectralRange
    steps: list[list[tuple[LinCombo, LinCombo]]] = field(default_factory=list)
    name: str = "W"

    def add_step(self, xs: Sequence[LinCombo], ys: Sequence[LinCombo]) -> None:
        if len(xs) != self.N or len(ys) != self.N:
            raise PepError(f"consensus step needs {self.N} inputs and outputs")
        self.steps.append(list(zip(xs, ys)))

    @property
    def n_steps(self) -> int:
        return len(self.steps)


def exact_consensus(W, xs: Sequence[LinCombo]) -> list[LinCombo]:
    """Outputs of a consensus step with a given matrix, by substitution."""
    W = np.asarray(W, dtype=float)
    N = len(xs)
    if W.shape != (N, N):
        raise PepError(f"matrix of shape {W.shape} does not match {N} agents")
    out = []
    for i in range(N):
        y = LinCombo()
        for j in range(N):
            if W[i, j] != 0.0:
                y = y + xs[j] * W[i, j]
        out.append(y)
    return out


def _reuse(group: ConsensusGroup, xs: Sequence[LinCombo], tol: float = 1e-10):
    """Write ``xs = sum_k c_k X_k + 1 u^T`` over the group's earlier inputs.

    Returns ``(c, u)`` or None.  W is linear and fixes the consensus
    direction, so the outputs are then ``sum_k c_k Y_k + 1 u^T``.
    """
    N = len(xs)
    basis = sorted({v for x in xs for v in x.terms} |
                   {v for step in group.steps for x, _ in step for v in x.terms})
    pos = {v: i for i, v in enumerate(basis)}

    def centered(cols):
        M = np.zeros((N, len(basis)))
        for i, x in enumerate(cols):
            for v, c in x.terms.items():
                M[i, pos[v]] = c
        return (M - M.mean(axis=0)).ravel()

    target = centered(xs)
    scale = max(np.abs(target).max(initial=0.0), 1.0)
    if group.steps:
        A = np.column_stack([centered([x for x, _ in step]) for step in group.steps])
        coef, *_ = np.linalg.lstsq(A, target, rcond=None)
        resid = target - A @ coef
    else:
        coef, resid = np.zeros(0), target
    if np.abs(resid).max(initial=0.0) > tol * scale:
        return None
    u = xs[0] - sum((c * step[0][0] for c, step in zip(coef, group.steps) if c != 0.0), LinCombo())
    return coef, u


def consensus_step(problem: PepProblem, xs: Sequence[LinCombo], label: str,
                   W=None, group: ConsensusGroup | None = None) -> list[LinCombo]:
    """Apply one consensus step, exact (``W``) or relaxed (``group``).

    If the input is (up to a vector shared by all agents) a combination of
    inputs already seen by the group, linearity gives the output without new
    vectors; this also covers inputs equal at every agent.  Fresh outputs
    for dependent inputs would leave the spectral LMI without interior.
    """
    if W is not None:
        return exact_consensus(W, xs)
    if group is None:
        raise PepError("consensus_step needs either W or a group")
    if group.range.is_singleton:
        mean = sum(xs, LinCombo()) / len(xs)
        return [LinCombo(mean.terms) for _ in xs]
    hit = _reuse(group, xs)
    if hit is not None:
        coef, u = hit
        out = []
        for i in range(len(xs)):
            y = LinCombo(u.terms)
            for c, step in zip(coef, group.steps):
                if c != 0.0:
                    y = y + c * step[i][1]
            out.append(y)
        return out
    ys = [problem.declare_vector(f"{label}_{i + 1}", "consensus-output") for i in range(len(xs))]
    group.add_step(xs, ys)
    return ys


def build_w1(N: int, lam: float) -> np.ndarray:
    """``J - lam (I - J)``: eigenvalue 1 on the consensus direction, ``-lam`` elsewhere."""
    if N < 2:
        raise PepError("need N >= 2")
    if not 0.0 <= lam < 1.0:
        raise PepError("need 0 <= lam < 1")
    J = np.full((N, N), 1.0 / N)
    return J - lam * (np.eye(N) - J)


def _sum_inner(us: Sequence[LinCombo], vs: Sequence[LinCombo]) -> QuadExpr:
    total = QuadExpr()
    for u, v in zip(us, vs):
        total = total + inner(u, v)
    return total


def spectral_constraints(group: ConsensusGroup, mode: str = "auto") -> tuple[list, list[LMI]]:
    """Necessary Gram-level conditions for ``Y = W X`` with ``W`` in the class.

    ``mode`` is ``"full"``, ``"symmetric-range"`` or ``"auto"`` (the latter
    picks symmetric-range whenever ``lam_plus == -lam_minus``).
    """
    r = group.range
    if mode == "auto":
        mode = "symmetric-range" if r.is_symmetric else "full"
    if mode == "symmetric-range" and not r.is_symmetric:
        raise PepError("symmetric-range mode requires lam_plus == -lam_minus")
    if mode not in ("full", "symmetric-range"):
        raise PepError(f"unknown mode {mode!r}")

    N = group.N
    K = group.n_steps
    xs = [[x for x, _ in step] for step in group.steps]
    ys = [[y for _, y in step] for step in group.steps]
    xc, yc = [], []
    scalars: list = []
    for k in range(K):
        mx = sum(xs[k], LinCombo()) / N
        my = sum(ys[k], LinCombo()) / N
        scalars.append(VectorEquality(mx - my, f"{group.name}:mean[{k}]"))
        xc.append([x - mx for x in xs[k]])
        yc.append([y - my for y in ys[k]])

    XY = [[_sum_inner(xs[k], ys[l]) for l in range(K)] for k in range(K)]
    XYc = [[_sum_inner(xc[k], yc[l]) for l in range(K)] for k in range(K)]
    for k in range(K):
        for l in range(k + 1, K):
            scalars.append(Constraint(XY[k][l] - XY[l][k], "==", f"{group.name}:sym[{k},{l}]"))
            scalars.append(Constraint(XYc[k][l] - XYc[l][k], "==", f"{group.name}:symc[{k},{l}]"))

    XX = [[_sum_inner(xc[k], xc[l]) for l in range(K)] for k in range(K)]
    YY = [[_sum_inner(yc[k], yc[l]) for l in range(K)] for k in range(K)]
    lm, lp = r.lam_minus, r.lam_plus
    lmis = []
    if mode == "symmetric-range":
        lam2 = lp * lp
        lmis.append(LMI([[XX[k][l] * lam2 - YY[k][l] for l in range(K)] for k in range(K)],
                        f"{group.name}:contraction"))
    else:
        lmis.append(LMI([[XYc[k][l] - XX[k][l] * lm for l in range(K)] for k in range(K)],
                        f"{group.name}:lower"))
        lmis.append(LMI([[XX[k][l] * lp - XYc[k][l] for l in range(K)] for k in range(K)],
                        f"{group.name}:upper"))
        lmis.append(LMI([[-(YY[k][l] - XYc[l][k] * lp - XYc[k][l] * lm + XX[k][l] * (lm * lp))
                          for l in range(K)] for k in range(K)],
                        f"{group.name}:variance"))
    return scalars, lmis


def add_spectral_constraints(problem: PepProblem, groups: Sequence[ConsensusGroup], mode: str = "auto") -> None:
    for g in groups:
        if g.n_steps == 0:
            continue
        scalars, lmis = spectral_constraints(g, mode)
        problem.add_constraints(scalars)
        for lmi in lmis:
            problem.add_lmi(lmi)


def _perp_basis(N: int) -> np.ndarray:
    """Orthonormal basis (N x N-1) of the complement of the all-ones vector."""
    H = np.eye(N) - 1.0 / N
    U, _, _ = np.linalg.svd(H)
    return U[:, : N - 1]


@dataclass
class MembershipReport:
    ok: bool
    violations: list[str]
    eigenvalues: np.ndarray

    def __bool__(self) -> bool:
        return self.ok


def is_member(W, r: SpectralRange, tol: float = 1e-8) -> MembershipReport:
    """Check symmetry, generalized double stochasticity and the spectral range."""
    W = np.asarray(W, dtype=float)
    if W.ndim != 2 or W.shape[0] != W.shape[1]:
        raise PepError("W must be square")
    N = W.shape[0]
    one = np.ones(N)
    violations = []
    asym = np.max(np.abs(W - W.T)) if N else 0.0
    if asym > tol:
        violations.append(f"asymmetric (max |W - W^T| = {asym:.3g})")
    rows = np.max(np.abs(W @ one - one))
    if rows > tol:
        violations.append(f"row sums differ from 1 by {rows:.3g}")
    cols = np.max(np.abs(one @ W - one))
    if cols > tol:
        violations.append(f"column sums differ from 1 by {cols:.3g}")
    # spectrum of W restricted to the complement of the consensus direction
    Q = _perp_basis(N)
    ev_other = np.linalg.eigvalsh(Q.T @ (0.5 * (W + W.T)) @ Q)
    if N > 1 and (ev_other.min() < r.lam_minus - tol or ev_other.max() > r.lam_plus + tol):
        lo, hi = ev_other.min(), ev_other.max()
        violations.append(f"eigenvalues [{lo:.6g}, {hi:.6g}] outside [{r.lam_minus}, {r.lam_plus}]")
    return MembershipReport(not violations, violations, np.sort(np.linalg.eigvalsh(0.5 * (W + W.T))))


def random_member(N: int, r: SpectralRange, seed=None, nonnegative: bool = False,
                  max_tries: int = 10_000) -> np.ndarray:
    """Random matrix of the class: ``J + Q diag(lam) Q^T`` with ``Q`` spanning 1-perp."""
    if N < 2:
        raise PepError("need N >= 2")
    rng = np.random.default_rng(seed)
    one = np.ones((N, 1)) / np.sqrt(N)
    for _ in range(max_tries):
        A = rng.standard_normal((N, N - 1))
        A -= one @ (one.T @ A)
        Q, _ = np.linalg.qr(A)
        lam = rng.uniform(r.lam_minus, r.lam_plus, size=N - 1)
        W = np.full((N, N), 1.0 / N) + (Q * lam) @ Q.T
        W = 0.5 * (W + W.T)
        if not nonnegative or W.min() >= 0.0:
            return W
    raise PepError(f"no entry-wise nonnegative sample found in {max_tries} tries")
