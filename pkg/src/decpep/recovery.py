"""Worst-case instances from a solved PEP: coordinates, worst averaging matrix, checks."""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from decpep.consensus import ConsensusGroup, SpectralRange, _perp_basis, is_member
from decpep.core import PepError, gram_lookup, value_lookup


def factorize_gram(G, rank_tol: float = 1e-6) -> np.ndarray:
    """``P`` (d x n) with ``P^T P ~ G``, keeping eigenvalues >= rank_tol * max."""
    G = np.asarray(G, dtype=float)
    if G.ndim != 2 or G.shape[0] != G.shape[1]:
        raise PepError("G must be square")
    G = 0.5 * (G + G.T)
    lam, V = np.linalg.eigh(G)
    top = lam.max(initial=0.0)
    scale = max(np.linalg.norm(G), 1e-300)
    if lam.min(initial=0.0) < -1e-8 * scale:
        raise PepError(f"G is indefinite (eigenvalue {lam.min():.3g})")
    keep = lam >= rank_tol * top if top > 0 else np.zeros_like(lam, dtype=bool)
    return (np.sqrt(lam[keep])[:, None] * V[:, keep].T)[::-1]


def _coords(problem, P_full: np.ndarray) -> dict:
    return {v: P_full[:, k] for k, v in enumerate(problem.vectors)}


def vector_key(v) -> str:
    # labels repeat across agents' consensus outputs, ids do not
    return f"{v.label}#{v.id}"


def value_key(s) -> str:
    return f"f{s.agent}({s.point_label})#{s.id}"


def reshape_group(group: ConsensusGroup, coords: dict, d: int) -> tuple[np.ndarray, np.ndarray]:
    """``X_r, Y_r`` (N x K'd): per-dimension step matrices stacked horizontally."""
    N, K = group.N, group.n_steps
    X = np.zeros((d, N, K))
    Y = np.zeros((d, N, K))
    for k, step in enumerate(group.steps):
        for i, (x, y) in enumerate(step):
            X[:, i, k] = x.evaluate(coords, d)
            Y[:, i, k] = y.evaluate(coords, d)
    return np.hstack(list(X)), np.hstack(list(Y))


def recover_matrix_lsq(X_r, Y_r) -> tuple[np.ndarray, float]:
    """Least-squares matrix ``Y_r X_r^+`` and its remainder ``||Y_r - W X_r||_F``."""
    X_r = np.asarray(X_r, dtype=float)
    Y_r = np.asarray(Y_r, dtype=float)
    if X_r.shape != Y_r.shape:
        raise PepError("X_r and Y_r must have the same shape")
    if X_r.size == 0:
        return np.zeros((X_r.shape[0], X_r.shape[0])), 0.0
    s_max = np.linalg.norm(X_r, 2)
    W = Y_r @ np.linalg.pinv(X_r, rcond=1e-10) if s_max > 0 else np.zeros((X_r.shape[0],) * 2)
    return W, float(np.linalg.norm(Y_r - W @ X_r))


def recover_matrix_sdp(X_r, Y_r, r: SpectralRange) -> tuple[np.ndarray, float, str]:
    """Closest member of the class: min ``||Y_r - W X_r||_F`` over symmetric W
    with ``W 1 = 1`` and spectrum on the complement of 1 inside ``r``."""
    import cvxpy as cp

    X_r = np.asarray(X_r, dtype=float)
    Y_r = np.asarray(Y_r, dtype=float)
    N = X_r.shape[0]
    if X_r.shape != Y_r.shape:
        raise PepError("X_r and Y_r must have the same shape")
    Q = _perp_basis(N)
    W = cp.Variable((N, N), symmetric=True)
    t = cp.Variable()
    cons = [W @ np.ones(N) == np.ones(N), cp.norm(Y_r - W @ X_r, "fro") <= t]
    if N > 1:
        S = Q.T @ W @ Q
        S = (S + S.T) / 2
        cons += [S - r.lam_minus * np.eye(N - 1) >> 0, r.lam_plus * np.eye(N - 1) - S >> 0]
    prob = cp.Problem(cp.Minimize(t), cons)
    prob.solve(solver=cp.CLARABEL)
    if W.value is None:
        raise PepError(f"matrix recovery failed: {prob.status}")
    Wv = 0.5 * (W.value + W.value.T)
    return Wv, float(np.linalg.norm(Y_r - Wv @ X_r)), str(prob.status)


@dataclass
class GroupRecovery:
    name: str
    X_r: np.ndarray
    Y_r: np.ndarray
    W: np.ndarray | None = None
    remainder: float = np.nan
    method: str = ""
    member: bool = False


@dataclass
class WorstCaseInstance:
    d: int
    coordinates: dict[str, np.ndarray]
    values: dict[str, float]
    groups: list[GroupRecovery] = field(default_factory=list)
    objective: float = np.nan
    residuals: dict[str, float] = field(default_factory=dict)

    def to_json(self) -> str:
        out = {
            "dimension": self.d,
            "objective": self.objective,
            "coordinates": {k: v.tolist() for k, v in self.coordinates.items()},
            "values": self.values,
            "groups": [
                {
                    "name": g.name,
                    "X_r": g.X_r.tolist(),
                    "Y_r": g.Y_r.tolist(),
                    "W": None if g.W is None else g.W.tolist(),
                    "remainder": g.remainder,
                    "method": g.method,
                    "member": g.member,
                }
                for g in self.groups
            ],
            "residuals": self.residuals,
        }
        return json.dumps(out, indent=1, sort_keys=True)


def worst_case_instance(result, rank_tol: float = 1e-6, recover: bool = True,
                        member_tol: float = 1e-5, gram=None) -> WorstCaseInstance:
    """Coordinates of the worst-case trajectory and, per consensus group, the
    recovered matrix (least squares first, conic fallback on membership failure).

    ``gram`` replaces the solved Gram block (same reduced basis), e.g. to
    check that a perturbed solution gets flagged.
    """
    inst = result.instance
    problem = inst.problem
    Pr = factorize_gram(result.solution.gram if gram is None else gram, rank_tol)
    L = result.sdp.lift if result.sdp.lift is not None else np.eye(Pr.shape[1])
    P = Pr @ L.T
    d = P.shape[0]
    coords = _coords(problem, P)
    vals = {value_key(s): float(result.solution.free[k]) for k, s in enumerate(problem.values)}
    wc = WorstCaseInstance(d, {vector_key(v): coords[v] for v in problem.vectors}, vals,
                           objective=float(result.objective))
    for g in inst.groups:
        X_r, Y_r = reshape_group(g, coords, d)
        rec = GroupRecovery(g.name, X_r, Y_r)
        if recover:
            W, rem = recover_matrix_lsq(X_r, Y_r)
            rec.W, rec.remainder, rec.method = W, rem, "lsq"
            rec.member = bool(is_member(W, g.range, member_tol))
            if not rec.member:
                W2, rem2, _ = recover_matrix_sdp(X_r, Y_r, g.range)
                rec.W, rec.remainder, rec.method = W2, rem2, "sdp"
                rec.member = bool(is_member(W2, g.range, member_tol))
        wc.groups.append(rec)
    wc.residuals = feasibility_report(wc, inst)
    return wc


def _category(name: str) -> str:
    if name.startswith("interp"):
        return "interpolation"
    if name.startswith("bound"):
        return "subgradient-bound"
    if name.startswith("init") or name == "tracking-sum":
        return "initial"
    if name == "optimality":
        return "optimality"
    return "spectral"


def feasibility_report(wc: WorstCaseInstance, built, W_hat=None) -> dict[str, float]:
    """Largest violation per constraint family, evaluated on the reconstructed
    coordinates (``P^T P``, so truncation error shows up here).

    Iterates are linear in the basis vectors, so the update equations hold by
    construction except through consensus; ``consensus`` is
    ``max ||Y_r - W X_r||_F / max(1, ||Y_r||_F)`` over groups using ``W_hat``
    (one matrix or one per group) or the recovered matrices.
    """
    problem = built.problem
    coords = {v: np.asarray(wc.coordinates[vector_key(v)], dtype=float) for v in problem.vectors}
    for v, x in coords.items():
        if len(x) != wc.d:
            raise PepError(f"coordinate of {v.label} has dimension {len(x)}, expected {wc.d}")
    P = np.column_stack([coords[v] for v in problem.vectors]) if problem.vectors else np.zeros((wc.d, 0))
    G = P.T @ P
    look = gram_lookup(problem, G)
    fv = [wc.values[value_key(s)] for s in problem.values]
    vals = value_lookup(problem, fv)
    out: dict[str, float] = {}
    for c in problem.constraints:
        res = c.residual(look, vals)
        key = _category(c.name or "")
        out[key] = max(out.get(key, 0.0), float(res))
    for lmi in problem.lmis:
        out["spectral"] = max(out.get("spectral", 0.0), float(lmi.residual(look, vals)))
    out["objective"] = abs(float(problem.objective.evaluate(look, vals)) - wc.objective)

    mats = W_hat
    if mats is None and built.formulation.W is not None:
        mats = built.formulation.W
    cons = 0.0
    for k, g in enumerate(wc.groups):
        W = mats[k] if isinstance(mats, (list, tuple)) else mats
        if W is None:
            W = g.W
        if W is None:
            continue
        cons = max(cons, float(np.linalg.norm(g.Y_r - np.asarray(W) @ g.X_r)) / max(1.0, np.linalg.norm(g.Y_r)))
    if wc.groups:
        out["consensus"] = float(cons)
    return out
