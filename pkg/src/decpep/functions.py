"""Local function classes and their interpolation conditions."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from decpep.core import (
    Constraint,
    LinCombo,
    PepError,
    PepProblem,
    QuadExpr,
    ValueSymbol,
    VectorEquality,
    inner,
    sqnorm,
)


@dataclass(frozen=True)
class FunctionClassSpec:
    """Either ``smooth-strongly-convex`` (mu, L) or ``convex-bounded-subgradient`` (R)."""

    kind: str
    mu: float = 0.0
    L: float = math.inf
    R: float = math.inf

    def __post_init__(self):
        if self.kind == "smooth-strongly-convex":
            if self.mu < 0 or not self.L > 0:
                raise PepError("need mu >= 0 and L > 0")
            if math.isfinite(self.L) and not self.mu < self.L:
                raise PepError("need mu < L")
        elif self.kind == "convex-bounded-subgradient":
            if not self.R > 0:
                raise PepError("need R > 0")
        else:
            raise PepError(f"unknown function class {self.kind!r}")

    @classmethod
    def smooth_strongly_convex(cls, mu: float = 0.0, L: float = math.inf) -> "FunctionClassSpec":
        return cls("smooth-strongly-convex", mu=mu, L=L)

    @classmethod
    def bounded_subgradient(cls, R: float) -> "FunctionClassSpec":
        return cls("convex-bounded-subgradient", R=R)


@dataclass(eq=False)
class Triplet:
    point: LinCombo
    gradient: LinCombo
    value: ValueSymbol
    label: str


@dataclass(eq=False)
class LocalFunction:
    problem: PepProblem
    agent: int
    spec: FunctionClassSpec
    triplets: list[Triplet] = field(default_factory=list)

    def triplet(self, label: str) -> Triplet:
        for t in self.triplets:
            if t.label == label:
                return t
        raise PepError(f"function {self.agent} has no triplet at {label!r}")

    def has(self, label: str) -> bool:
        return any(t.label == label for t in self.triplets)


def oracle_call(f: LocalFunction, point: LinCombo, label: str) -> tuple[LinCombo, ValueSymbol]:
    """First-order oracle: fresh gradient vector and value symbol at ``point``."""
    if f.has(label):
        raise PepError(f"label {label!r} already evaluated for function {f.agent}")
    g = f.problem.declare_vector(f"g{f.agent}({label})", "gradient")
    val = f.problem.declare_value(f.agent, label)
    f.triplets.append(Triplet(point, g, val, label))
    return g, val


def _pair_condition(spec: FunctionClassSpec, ti: Triplet, tj: Triplet) -> QuadExpr:
    """Expression that must be <= 0 for the ordered pair (i, j)."""
    dx = ti.point - tj.point
    dg = ti.gradient - tj.gradient
    # f_j - f_i + <g_j, x_i - x_j> + curvature terms <= 0
    expr = tj.value - ti.value + inner(tj.gradient, dx)
    if spec.kind == "convex-bounded-subgradient":
        return expr
    mu, L = spec.mu, spec.L
    if math.isinf(L):
        return expr + sqnorm(dx) * (mu / 2.0)
    if mu == 0.0:
        return expr + sqnorm(dg) * (1.0 / (2.0 * L))
    coef = 1.0 / (2.0 * (1.0 - mu / L))
    return expr + (sqnorm(dg) * (1.0 / L) + sqnorm(dx) * mu - inner(dg, dx) * (2.0 * mu / L)) * coef


def interpolation_constraints(f: LocalFunction) -> list[Constraint]:
    """All pairwise interpolation inequalities (plus norm bounds for F_R)."""
    out = []
    ts = f.triplets
    for i, ti in enumerate(ts):
        for j, tj in enumerate(ts):
            if i != j:
                out.append(Constraint(_pair_condition(f.spec, ti, tj), "<=",
                                      f"interp[{f.agent}]({ti.label},{tj.label})"))
    if f.spec.kind == "convex-bounded-subgradient":
        R2 = f.spec.R ** 2
        for t in ts:
            out.append(Constraint(sqnorm(t.gradient) - R2, "<=", f"bound[{f.agent}]({t.label})"))
    return out


def global_optimality(fs: list[LocalFunction], x_star: LinCombo, label: str = "*") -> list[VectorEquality]:
    """Stationarity of the average at ``x_star``: sum of local gradients is zero."""
    total = LinCombo()
    for f in fs:
        t = f.triplet(label)
        if t.point != x_star:
            raise PepError(f"triplet {label!r} of function {f.agent} is not at x_star")
        total = total + t.gradient
    return [VectorEquality(total, "optimality")]
