"""PEP instances for DGD, DIGing and Acc-DNGD.

Each builder returns a :class:`BuiltInstance` whose problem objective is the
worst-case criterion.  The consensus steps are either substituted with a
given matrix (``W``) or relaxed over a spectral class (``spectral``).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from decpep.consensus import ConsensusGroup, SpectralRange, add_spectral_constraints, consensus_step
from decpep.core import Constraint, LinCombo, PepError, PepProblem, QuadExpr, VectorEquality, assemble, sqnorm
from decpep.functions import (
    FunctionClassSpec,
    LocalFunction,
    global_optimality,
    interpolation_constraints,
    oracle_call,
)
from decpep.solver import SdpData, Solution, SolveOptions, solve


@dataclass
class Formulation:
    """Exact (given matrix) or spectral (class of matrices) consensus model."""

    W: np.ndarray | None = None
    spectral: SpectralRange | None = None
    mode: str = "auto"

    def __post_init__(self):
        if (self.W is None) == (self.spectral is None):
            raise PepError("give exactly one of W or spectral")
        if self.W is not None:
            self.W = np.asarray(self.W, dtype=float)

    @classmethod
    def exact(cls, W) -> "Formulation":
        return cls(W=W)

    @classmethod
    def symmetric(cls, lam: float, mode: str = "auto") -> "Formulation":
        return cls(spectral=SpectralRange.symmetric(lam), mode=mode)

    @property
    def kind(self) -> str:
        return "exact" if self.W is not None else "spectral"

    def describe(self) -> str:
        if self.W is not None:
            return "exact"
        return f"spectral[{self.spectral.lam_minus:g},{self.spectral.lam_plus:g}]"


@dataclass
class PepResult:
    instance: "BuiltInstance"
    sdp: SdpData
    solution: Solution

    @property
    def objective(self) -> float:
        return self.solution.objective

    @property
    def status(self) -> str:
        return self.solution.status

    def full_gram(self) -> np.ndarray:
        from decpep.core import full_gram

        return full_gram(self.sdp, self.solution.gram)


@dataclass
class BuiltInstance:
    problem: PepProblem
    groups: list[ConsensusGroup]
    criterion: QuadExpr
    trajectories: dict[str, LinCombo]
    functions: list[LocalFunction]
    params: object
    formulation: Formulation
    extra: dict = field(default_factory=dict)

    def assemble(self, substitute: bool = True) -> SdpData:
        return assemble(self.problem, substitute=substitute)

    def solve(self, opts: SolveOptions | None = None, backend: str = "embedded",
              substitute: bool = True) -> PepResult:
        sdp = self.assemble(substitute)
        return PepResult(self, sdp, solve(sdp, opts, backend))


def _new_group(form: Formulation, N: int, name: str) -> ConsensusGroup | None:
    return ConsensusGroup(N, form.spectral, name=name) if form.spectral is not None else None


def _finish(problem: PepProblem, fs, groups, form: Formulation) -> None:
    for f in fs:
        problem.add_constraints(interpolation_constraints(f))
    add_spectral_constraints(problem, [g for g in groups if g is not None], form.mode)


def _optimum(problem: PepProblem, anchor: bool) -> LinCombo:
    # all three methods are translation-equivariant when the start is free,
    # so the minimizer may sit at the origin
    return LinCombo() if anchor else problem.declare_vector("x*", "optimum")


# ---------------------------------------------------------------------------
# DGD


@dataclass
class DgdParams:
    N: int
    K: int
    formulation: Formulation
    h: float = 1.0
    steps: Sequence[float] | None = None
    D: float = 1.0
    R: float = 1.0
    anchor_optimum: bool = True

    def __post_init__(self):
        if self.N < 1 or self.K < 1:
            raise PepError("need N >= 1 and K >= 1")
        if not (self.D > 0 and self.R > 0):
            raise PepError("need D > 0 and R > 0")
        if self.steps is not None and len(self.steps) != self.K:
            raise PepError("explicit step schedule must have K entries")

    def step_sizes(self) -> list[float]:
        """Constant ``D h / (R sqrt(K))`` unless a schedule is given."""
        if self.steps is not None:
            return [float(a) for a in self.steps]
        return [self.D * self.h / (self.R * math.sqrt(self.K))] * self.K


def build_dgd(p: DgdParams) -> BuiltInstance:
    """Worst case of ``f(x_av) - f(x*)`` after K DGD steps on F_R functions."""
    form = p.formulation
    problem = PepProblem(f"dgd N={p.N} K={p.K} {form.describe()}")
    spec = FunctionClassSpec.bounded_subgradient(p.R)
    fs = [LocalFunction(problem, i + 1, spec) for i in range(p.N)]
    x0 = problem.declare_vector("x0", "initial-point")
    xstar = _optimum(problem, p.anchor_optimum)
    for f in fs:
        oracle_call(f, xstar, "*")

    group = _new_group(form, p.N, "W")
    alphas = p.step_sizes()
    traj: dict[str, LinCombo] = {}
    x = [x0] * p.N
    history = [x]
    for k in range(p.K):
        for i in range(p.N):
            traj[f"x[{k}][{i + 1}]"] = x[i]
        y = consensus_step(problem, x, f"y{k}", form.W, group)
        nxt = []
        for i, f in enumerate(fs):
            g, _ = oracle_call(f, x[i], f"x{k}")
            nxt.append(y[i] - alphas[k] * g)
        x = nxt
        history.append(x)
    for i in range(p.N):
        traj[f"x[{p.K}][{i + 1}]"] = x[i]

    x_av = sum((xi for xs in history for xi in xs), LinCombo()) / (p.N * (p.K + 1))
    traj["x_av"] = x_av
    for f in fs:
        oracle_call(f, x_av, "av")

    problem.add_constraints(global_optimality(fs, xstar))
    problem.add_constraint(Constraint(sqnorm(x0 - xstar) - p.D ** 2, "<=", "init"))
    _finish(problem, fs, [group], form)
    crit = sum((f.triplet("av").value - f.triplet("*").value for f in fs), QuadExpr()) / p.N
    problem.set_objective(crit)
    return BuiltInstance(problem, [group] if group else [], crit, traj, fs, p, form,
                         {"x_star": xstar, "x0": x0})


# ---------------------------------------------------------------------------
# DIGing


@dataclass
class DigingParams:
    N: int
    K: int
    alpha: float
    formulation: Formulation
    mu: float = 0.1
    L: float = 1.0
    D: float = 1.0
    E: float = 1.0
    policy: str = "time-varying"
    anchor_optimum: bool = True

    def __post_init__(self):
        if self.N < 1 or self.K < 0:
            raise PepError("need N >= 1 and K >= 0")
        if not 0 < self.mu < self.L:
            raise PepError("need 0 < mu < L")
        if self.D < 0 or self.E < 0 or self.alpha < 0:
            raise PepError("need D, E, alpha >= 0")
        if self.policy not in ("time-varying", "constant"):
            raise PepError(f"unknown matrix policy {self.policy!r}")


def _diging_iteration(problem, fs, x, s, g, k, alpha, form, group):
    wx = consensus_step(problem, x, f"wx{k}", form.W, group)
    ws = consensus_step(problem, s, f"ws{k}", form.W, group)
    x_new = [wx[i] - alpha * s[i] for i in range(len(fs))]
    g_new = [oracle_call(f, x_new[i], f"x{k + 1}")[0] for i, f in enumerate(fs)]
    s_new = [ws[i] + g_new[i] - g[i] for i in range(len(fs))]
    return x_new, s_new, g_new


def _tracking_error(s: Sequence[LinCombo], g: Sequence[LinCombo]) -> QuadExpr:
    N = len(s)
    gbar = sum(g, LinCombo()) / N
    return sum((sqnorm(si - gbar) for si in s), QuadExpr()) / N


def _distance(x: Sequence[LinCombo], xstar: LinCombo) -> QuadExpr:
    return sum((sqnorm(xi - xstar) for xi in x), QuadExpr()) / len(x)


def build_diging(p: DigingParams) -> BuiltInstance:
    """Worst case of ``(1/N) sum ||x_i^K - x*||^2`` after K DIGing iterations."""
    form = p.formulation
    problem = PepProblem(f"diging N={p.N} K={p.K} {form.describe()}")
    spec = FunctionClassSpec.smooth_strongly_convex(p.mu, p.L)
    fs = [LocalFunction(problem, i + 1, spec) for i in range(p.N)]
    xstar = _optimum(problem, p.anchor_optimum)
    for f in fs:
        oracle_call(f, xstar, "*")
    x = [problem.declare_vector(f"x0_{i + 1}", "initial-point") for i in range(p.N)]
    g = [oracle_call(f, x[i], "x0")[0] for i, f in enumerate(fs)]
    s = list(g)
    traj = {f"x[0][{i + 1}]": x[i] for i in range(p.N)}

    groups: list[ConsensusGroup] = []
    shared = _new_group(form, p.N, "W")
    for k in range(p.K):
        if p.policy == "constant" or shared is None:
            group = shared
        else:
            group = _new_group(form, p.N, f"W{k}")
        x, s, g = _diging_iteration(problem, fs, x, s, g, k, p.alpha, form, group)
        if group is not None and group is not shared:
            groups.append(group)
        for i in range(p.N):
            traj[f"x[{k + 1}][{i + 1}]"] = x[i]
    if shared is not None and p.policy == "constant":
        groups.append(shared)

    problem.add_constraints(global_optimality(fs, xstar))
    x0 = [traj[f"x[0][{i + 1}]"] for i in range(p.N)]
    g0 = [f.triplet("x0").gradient for f in fs]
    problem.add_constraint(Constraint(_distance(x0, xstar) - p.D ** 2, "<=", "init:x"))
    problem.add_constraint(Constraint(_tracking_error(g0, g0) - p.E ** 2, "<=", "init:s"))
    _finish(problem, fs, groups, form)
    crit = _distance(x, xstar)
    problem.set_objective(crit)
    return BuiltInstance(problem, groups, crit, traj, fs, p, form, {"x_star": xstar})


def rate_problem_diging(p: DigingParams, beta_c: float | None = None) -> BuiltInstance:
    """One-iteration PEP whose optimum contracts the weighted DIGing metric.

    The metric is ``P_beta = (1/N) sum ||x_i - x*||^2 + (beta/N) sum ||s_i - avg grad||^2``;
    the initial metric is fixed to one and the next one is maximized.
    ``beta_c`` defaults to ``alpha / L``.
    """
    if beta_c is None:
        beta_c = p.alpha / p.L
    if beta_c < 0:
        raise PepError("need beta_c >= 0")
    form = p.formulation
    problem = PepProblem(f"diging-rate N={p.N} {form.describe()}")
    spec = FunctionClassSpec.smooth_strongly_convex(p.mu, p.L)
    fs = [LocalFunction(problem, i + 1, spec) for i in range(p.N)]
    xstar = _optimum(problem, p.anchor_optimum)
    for f in fs:
        oracle_call(f, xstar, "*")
    x0 = [problem.declare_vector(f"x0_{i + 1}", "initial-point") for i in range(p.N)]
    s0 = [problem.declare_vector(f"s0_{i + 1}", "initial-point") for i in range(p.N)]
    g0 = [oracle_call(f, x0[i], "x0")[0] for i, f in enumerate(fs)]
    group = _new_group(form, p.N, "W0")
    x1, s1, g1 = _diging_iteration(problem, fs, x0, s0, g0, 0, p.alpha, form, group)

    def metric(x, s, g):
        return _distance(x, xstar) + _tracking_error(s, g) * beta_c

    problem.add_constraints(global_optimality(fs, xstar))
    problem.add_constraint(VectorEquality(sum(s0, LinCombo()) - sum(g0, LinCombo()), "tracking-sum"))
    problem.add_constraint(Constraint(metric(x0, s0, g0) - 1.0, "==", "init:metric"))
    _finish(problem, fs, [group], form)
    crit = metric(x1, s1, g1)
    problem.set_objective(crit)
    traj = {}
    for i in range(p.N):
        traj[f"x[0][{i + 1}]"], traj[f"s[0][{i + 1}]"] = x0[i], s0[i]
        traj[f"x[1][{i + 1}]"], traj[f"s[1][{i + 1}]"] = x1[i], s1[i]
    return BuiltInstance(problem, [group] if group else [], crit, traj, fs, p, form,
                         {"x_star": xstar, "beta_c": beta_c})


def beta_grid(alpha: float, L: float, points: int = 13) -> np.ndarray:
    """Log grid of weights around ``alpha / L`` (three decades each side)."""
    return (alpha / L) * np.logspace(-3, 3, points)


# ---------------------------------------------------------------------------
# Acc-DNGD


@dataclass
class AccDngdParams:
    N: int
    K: int
    eta: float
    formulation: Formulation
    beta: float = 0.0
    k0: float = 1.0
    L: float = 1.0
    D: float = 1.0
    # "average": s_i^0 = (1/N) sum_j grad f_j(0);  "local": s_i^0 = grad f_i(0)
    s_init: str = "average"

    def __post_init__(self):
        if self.N < 1 or self.K < 0:
            raise PepError("need N >= 1 and K >= 0")
        if self.s_init not in ("average", "local"):
            raise PepError(f"unknown s_init {self.s_init!r}")
        if not 0 <= self.beta < 2:
            raise PepError("need 0 <= beta < 2")
        if self.k0 < 1:
            raise PepError("need k0 >= 1")
        if not 0 < self.eta_k(0) * self.L < 1:
            raise PepError("need 0 < eta_0 L < 1")

    def eta_k(self, k: int) -> float:
        return self.eta / (k + self.k0) ** self.beta


def accdngd_alpha_sequence(eta: float, beta: float, k0: float, L: float, K: int) -> list[float]:
    """Weights alpha_0..alpha_K: each the root in (0, 1) of
    ``a^2 = (eta_{k+1}/eta_k) (1 - a) alpha_k^2``."""
    etas = [eta / (k + k0) ** beta for k in range(K + 1)]
    if not 0 < etas[0] * L < 1:
        raise PepError("need 0 < eta_0 L < 1")
    alphas = [math.sqrt(etas[0] * L)]
    for k in range(K):
        c = etas[k + 1] / etas[k] * alphas[-1] ** 2
        # positive root of a^2 + c a - c = 0, written to avoid cancellation
        alphas.append(2.0 * c / (c + math.sqrt(c * c + 4.0 * c)))
    return alphas


def build_accdngd(p: AccDngdParams) -> BuiltInstance:
    """Worst case of ``f(xbar^K) - f(x*)`` for Acc-DNGD started at the origin."""
    form = p.formulation
    problem = PepProblem(f"accdngd N={p.N} K={p.K} {form.describe()}")
    spec = FunctionClassSpec.smooth_strongly_convex(0.0, p.L)
    fs = [LocalFunction(problem, i + 1, spec) for i in range(p.N)]
    xstar = problem.declare_vector("x*", "optimum")
    for f in fs:
        oracle_call(f, xstar, "*")
    alphas = accdngd_alpha_sequence(p.eta, p.beta, p.k0, p.L, p.K)

    zero = LinCombo()
    x = [zero] * p.N
    v = [zero] * p.N
    y = [zero] * p.N
    g = [oracle_call(f, y[i], "y0")[0] for i, f in enumerate(fs)]
    # with local init the spread of grad f_i(0) is unconstrained and so is the PEP
    s = list(g) if p.s_init == "local" else [sum(g, LinCombo()) / p.N] * p.N
    group = _new_group(form, p.N, "W")
    traj: dict[str, LinCombo] = {}
    for k in range(p.K):
        eta = p.eta_k(k)
        wy = consensus_step(problem, y, f"wy{k}", form.W, group)
        wv = consensus_step(problem, v, f"wv{k}", form.W, group)
        ws = consensus_step(problem, s, f"ws{k}", form.W, group)
        x = [wy[i] - eta * s[i] for i in range(p.N)]
        v = [wv[i] - (eta / alphas[k]) * s[i] for i in range(p.N)]
        a = alphas[k + 1]
        y = [a * x[i] + (1.0 - a) * v[i] for i in range(p.N)]
        g_new = [oracle_call(f, y[i], f"y{k + 1}")[0] for i, f in enumerate(fs)]
        s = [ws[i] + g_new[i] - g[i] for i in range(p.N)]
        g = g_new
        for i in range(p.N):
            traj[f"x[{k + 1}][{i + 1}]"] = x[i]
    xbar = sum(x, LinCombo()) / p.N
    traj["xbar"] = xbar
    for f in fs:
        oracle_call(f, xbar, "xbar")

    problem.add_constraints(global_optimality(fs, xstar))
    problem.add_constraint(Constraint(sqnorm(xstar) - p.D ** 2, "<=", "init"))
    _finish(problem, fs, [group], form)
    crit = sum((f.triplet("xbar").value - f.triplet("*").value for f in fs), QuadExpr()) / p.N
    problem.set_objective(crit)
    return BuiltInstance(problem, [group] if group else [], crit, traj, fs, p, form,
                         {"x_star": xstar, "alphas": alphas})
