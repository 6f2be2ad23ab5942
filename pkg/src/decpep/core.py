"""Symbolic vectors, Gram-linear expressions and PEP assembly.

Every vector appearing in a performance estimation problem is a linear
combination of abstract basis vectors.  Scalar products of such combinations
are linear in the Gram matrix ``G = P^T P`` of the basis, so interpolation
conditions, algorithm updates and performance criteria all become affine
expressions in ``G`` and in a vector of function values.  :func:`assemble`
turns a :class:`PepProblem` into solver-neutral conic data.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from numbers import Real
from typing import Iterable, Mapping, Sequence

import numpy as np

from decpep.solver.data import Functional, Row, SdpData

TAGS = ("initial-point", "gradient", "consensus-output", "optimum", "auxiliary")

# Which vector a linear equation should eliminate first: later entries win.
_ELIMINATION_PRIORITY = {
    "initial-point": 0,
    "optimum": 1,
    "auxiliary": 2,
    "gradient": 3,
    "consensus-output": 4,
}

_problem_ids = itertools.count(1)


class PepError(ValueError):
    """Raised on misuse of the symbolic PEP layer."""


@dataclass(frozen=True, order=True)
class BasisVector:
    owner: int
    id: int
    label: str = field(compare=False)
    tag: str = field(compare=False)

    def __repr__(self) -> str:
        return f"<{self.label}#{self.id}>"


@dataclass(frozen=True, order=True)
class ValueSymbol:
    owner: int
    id: int
    agent: int = field(compare=False)
    point_label: str = field(compare=False)

    def __repr__(self) -> str:
        return f"<f{self.agent}({self.point_label})#{self.id}>"

    def as_expr(self) -> "QuadExpr":
        return QuadExpr(values={self: 1.0})

    def __add__(self, other):
        return self.as_expr() + other

    __radd__ = __add__

    def __sub__(self, other):
        return self.as_expr() - other

    def __rsub__(self, other):
        return -self.as_expr() + other

    def __neg__(self):
        return -self.as_expr()

    def __mul__(self, scalar):
        return self.as_expr() * scalar

    __rmul__ = __mul__


def _clean(d: dict) -> dict:
    return {k: v for k, v in d.items() if v != 0.0}


class LinCombo:
    """Sparse linear combination of basis vectors.

    The empty combination is the zero vector (the origin).
    """

    __slots__ = ("terms",)

    def __init__(self, terms: Mapping[BasisVector, float] | None = None):
        self.terms: dict[BasisVector, float] = _clean(
            {v: float(c) for v, c in (terms or {}).items()}
        )

    @classmethod
    def zero(cls) -> "LinCombo":
        return cls()

    def _combine(self, other: "LinCombo", sign: float) -> "LinCombo":
        if isinstance(other, Real) and other == 0:
            return LinCombo(self.terms)
        if not isinstance(other, LinCombo):
            return NotImplemented
        out = dict(self.terms)
        for v, c in other.terms.items():
            out[v] = out.get(v, 0.0) + sign * c
        return LinCombo(out)

    def __add__(self, other):
        return self._combine(other, 1.0)

    def __radd__(self, other):
        return self._combine(other, 1.0)

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self)._combine(other, 1.0)

    def __neg__(self):
        return LinCombo({v: -c for v, c in self.terms.items()})

    def __mul__(self, scalar):
        if not isinstance(scalar, Real):
            return NotImplemented
        s = float(scalar)
        return LinCombo({v: s * c for v, c in self.terms.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not isinstance(scalar, Real):
            return NotImplemented
        return self * (1.0 / float(scalar))

    def __repr__(self) -> str:
        if not self.terms:
            return "LinCombo(0)"
        body = " + ".join(f"{c:g}*{v.label}" for v, c in sorted(self.terms.items()))
        return f"LinCombo({body})"

    def __eq__(self, other) -> bool:
        return isinstance(other, LinCombo) and self.terms == other.terms

    __hash__ = None

    def is_zero(self) -> bool:
        return not self.terms

    def coefficient(self, v: BasisVector) -> float:
        return self.terms.get(v, 0.0)

    def vectors(self) -> list[BasisVector]:
        return sorted(self.terms)

    def evaluate(self, coords: Mapping[BasisVector, np.ndarray], dim: int | None = None) -> np.ndarray:
        """Numeric value given concrete coordinates for each basis vector."""
        if dim is None:
            dim = len(next(iter(coords.values()))) if coords else 0
        out = np.zeros(dim)
        for v, c in self.terms.items():
            out = out + c * np.asarray(coords[v], dtype=float)
        return out


def _pair(a: BasisVector, b: BasisVector) -> tuple[BasisVector, BasisVector]:
    return (a, b) if a <= b else (b, a)


class QuadExpr:
    """Affine expression in Gram entries, function values and a constant.

    ``gram`` maps unordered pairs of basis vectors to the coefficient of their
    scalar product.
    """

    __slots__ = ("gram", "values", "constant")

    def __init__(self, gram=None, values=None, constant: float = 0.0):
        self.gram: dict[tuple[BasisVector, BasisVector], float] = _clean(
            {_pair(*k): float(c) for k, c in (gram or {}).items()}
        )
        self.values: dict[ValueSymbol, float] = _clean(
            {k: float(c) for k, c in (values or {}).items()}
        )
        self.constant = float(constant)

    @staticmethod
    def _coerce(other) -> "QuadExpr":
        if isinstance(other, QuadExpr):
            return other
        if isinstance(other, ValueSymbol):
            return other.as_expr()
        if isinstance(other, Real):
            return QuadExpr(constant=float(other))
        raise TypeError(f"cannot combine QuadExpr with {type(other).__name__}")

    def _combine(self, other, sign: float) -> "QuadExpr":
        try:
            o = self._coerce(other)
        except TypeError:
            return NotImplemented
        gram = dict(self.gram)
        for k, c in o.gram.items():
            gram[k] = gram.get(k, 0.0) + sign * c
        values = dict(self.values)
        for k, c in o.values.items():
            values[k] = values.get(k, 0.0) + sign * c
        return QuadExpr(gram, values, self.constant + sign * o.constant)

    def __add__(self, other):
        return self._combine(other, 1.0)

    __radd__ = __add__

    def __sub__(self, other):
        return self._combine(other, -1.0)

    def __rsub__(self, other):
        return (-self)._combine(other, 1.0)

    def __neg__(self):
        return self * -1.0

    def __mul__(self, scalar):
        if not isinstance(scalar, Real):
            return NotImplemented
        s = float(scalar)
        return QuadExpr(
            {k: s * c for k, c in self.gram.items()},
            {k: s * c for k, c in self.values.items()},
            s * self.constant,
        )

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return self * (1.0 / float(scalar))

    def __repr__(self) -> str:
        parts = [f"{c:g}<{a.label},{b.label}>" for (a, b), c in sorted(self.gram.items())]
        parts += [f"{c:g}{v!r}" for v, c in sorted(self.values.items())]
        if self.constant or not parts:
            parts.append(f"{self.constant:g}")
        return "QuadExpr(" + " + ".join(parts) + ")"

    def vectors(self) -> set[BasisVector]:
        return {v for pair in self.gram for v in pair}

    def evaluate(self, gram, values=None) -> float:
        """Evaluate numerically.

        ``gram`` is either a callable ``(a, b) -> <a, b>`` or a mapping from
        basis vectors to coordinate arrays; ``values`` maps value symbols to
        floats.
        """
        if not callable(gram):
            coords = gram
            gram = lambda a, b: float(np.dot(coords[a], coords[b]))  # noqa: E731
        total = self.constant
        for (a, b), c in self.gram.items():
            total += c * gram(a, b)
        for v, c in self.values.items():
            total += c * values[v]
        return total

    def substitute(self, mapping: Mapping[BasisVector, LinCombo]) -> "QuadExpr":
        """Replace basis vectors by linear combinations (bilinear expansion)."""
        if not any(v in mapping for pair in self.gram for v in pair):
            return self
        out = QuadExpr(values=self.values, constant=self.constant)
        gram: dict = {}
        for (a, b), c in self.gram.items():
            la = mapping.get(a)
            lb = mapping.get(b)
            if la is None and lb is None:
                gram[(a, b)] = gram.get((a, b), 0.0) + c
                continue
            ta = la.terms if la is not None else {a: 1.0}
            tb = lb.terms if lb is not None else {b: 1.0}
            for u, cu in ta.items():
                for w, cw in tb.items():
                    k = _pair(u, w)
                    gram[k] = gram.get(k, 0.0) + c * cu * cw
        out.gram = _clean(gram)
        return out


def inner(a: LinCombo, b: LinCombo) -> QuadExpr:
    """Scalar product of two combinations as a Gram-linear expression."""
    owners = {v.owner for v in a.terms} | {v.owner for v in b.terms}
    if len(owners) > 1:
        raise PepError("inner product mixes basis vectors of different problems")
    gram: dict = {}
    for u, cu in a.terms.items():
        for w, cw in b.terms.items():
            k = _pair(u, w)
            gram[k] = gram.get(k, 0.0) + cu * cw
    return QuadExpr(gram)


def sqnorm(a: LinCombo) -> QuadExpr:
    return inner(a, a)


@dataclass
class Constraint:
    """Scalar constraint ``expr == 0`` or ``expr <= 0``."""

    expr: QuadExpr
    relation: str = "<="
    name: str = ""

    def __post_init__(self):
        if self.relation not in ("==", "<="):
            raise PepError(f"unknown relation {self.relation!r}")

    def residual(self, gram, values=None) -> float:
        """Violation amount; zero when satisfied."""
        v = self.expr.evaluate(gram, values)
        return abs(v) if self.relation == "==" else max(v, 0.0)


@dataclass
class VectorEquality:
    """Dimension-free vector equation ``vec == 0``.

    Lowered to ``<vec, vec> == 0`` or eliminated by substitution at assembly.
    """

    vec: LinCombo
    name: str = ""

    def as_scalar(self) -> Constraint:
        return Constraint(sqnorm(self.vec), "==", self.name)

    def residual(self, gram, values=None) -> float:
        return abs(self.as_scalar().expr.evaluate(gram, values)) ** 0.5


@dataclass
class LMI:
    """Symmetric matrix of expressions constrained to be positive semidefinite."""

    entries: list[list[QuadExpr]]
    name: str = ""

    @property
    def size(self) -> int:
        return len(self.entries)

    def symmetrized(self) -> list[list[QuadExpr]]:
        m = self.size
        return [[(self.entries[k][l] + self.entries[l][k]) * 0.5 for l in range(m)] for k in range(m)]

    def evaluate(self, gram, values=None) -> np.ndarray:
        m = self.size
        out = np.empty((m, m))
        for k in range(m):
            for l in range(m):
                out[k, l] = self.entries[k][l].evaluate(gram, values)
        return out

    def residual(self, gram, values=None) -> float:
        """Most negative eigenvalue, clipped at zero."""
        if self.size == 0:
            return 0.0
        M = self.evaluate(gram, values)
        return max(-float(np.linalg.eigvalsh(0.5 * (M + M.T))[0]), 0.0)


class PepProblem:
    """A performance estimation problem under construction.

    Vectors and function values are declared on the problem; constraints,
    LMIs and the (maximized) objective are expressions over them.
    """

    def __init__(self, name: str = ""):
        self.name = name
        self.uid = next(_problem_ids)
        self.vectors: list[BasisVector] = []
        self.values: list[ValueSymbol] = []
        self.constraints: list[Constraint | VectorEquality] = []
        self.lmis: list[LMI] = []
        self.objective = QuadExpr()
        self.closed = False

    def __repr__(self) -> str:
        return (
            f"PepProblem({self.name!r}, vectors={len(self.vectors)}, values={len(self.values)}, "
            f"constraints={len(self.constraints)}, lmis={len(self.lmis)})"
        )

    def _check_open(self):
        if self.closed:
            raise PepError("problem building phase is closed")

    def declare_vector(self, label: str, tag: str = "auxiliary") -> LinCombo:
        self._check_open()
        if tag not in TAGS:
            raise PepError(f"unknown vector tag {tag!r}")
        v = BasisVector(self.uid, len(self.vectors) + 1, label, tag)
        self.vectors.append(v)
        return LinCombo({v: 1.0})

    def declare_value(self, agent: int, point_label: str) -> ValueSymbol:
        self._check_open()
        s = ValueSymbol(self.uid, len(self.values) + 1, agent, point_label)
        self.values.append(s)
        return s

    def _check_owned(self, vectors: Iterable[BasisVector] = (), values: Iterable[ValueSymbol] = ()):
        for v in vectors:
            if v.owner != self.uid:
                raise PepError(f"foreign basis vector {v!r}")
        for s in values:
            if s.owner != self.uid:
                raise PepError(f"foreign value symbol {s!r}")

    def add_constraint(self, c: Constraint | VectorEquality) -> None:
        self._check_open()
        if isinstance(c, VectorEquality):
            self._check_owned(c.vec.terms)
        else:
            self._check_owned(c.expr.vectors(), c.expr.values)
        self.constraints.append(c)

    def add_constraints(self, cs: Iterable[Constraint | VectorEquality]) -> None:
        for c in cs:
            self.add_constraint(c)

    def add_lmi(self, lmi: LMI) -> None:
        self._check_open()
        for row in lmi.entries:
            if len(row) != lmi.size:
                raise PepError("LMI matrix must be square")
            for e in row:
                self._check_owned(e.vectors(), e.values)
        self.lmis.append(lmi)

    def set_objective(self, expr: QuadExpr) -> None:
        self._check_open()
        expr = QuadExpr._coerce(expr)
        self._check_owned(expr.vectors(), expr.values)
        self.objective = expr

    def close(self) -> None:
        self.closed = True

    # numeric checks -------------------------------------------------------

    def residuals(self, gram, values=None) -> dict[str, float]:
        """Constraint name -> violation for a concrete (G, f_v) assignment."""
        out: dict[str, float] = {}
        for i, c in enumerate(self.constraints):
            out[c.name or f"c{i}"] = c.residual(gram, values)
        for i, lmi in enumerate(self.lmis):
            out[lmi.name or f"lmi{i}"] = lmi.residual(gram, values)
        return out


# ---------------------------------------------------------------------------
# Elimination of linear vector equations


def _pick_pivot(vec: LinCombo, eliminated: Mapping) -> BasisVector | None:
    if not vec.terms:
        return None
    cmax = max(abs(c) for c in vec.terms.values())
    candidates = [v for v, c in vec.terms.items() if abs(c) >= 0.1 * cmax and v not in eliminated]
    if not candidates:
        return None
    return max(candidates, key=lambda v: (_ELIMINATION_PRIORITY[v.tag], v.id))


def _apply(vec: LinCombo, mapping: Mapping[BasisVector, LinCombo]) -> LinCombo:
    out: dict = {}
    for v, c in vec.terms.items():
        for u, cu in (mapping[v].terms if v in mapping else {v: 1.0}).items():
            out[u] = out.get(u, 0.0) + c * cu
    return LinCombo(out)


def elimination_map(equations: Sequence[LinCombo], tol: float = 1e-12) -> dict[BasisVector, LinCombo]:
    """Solve linear vector equations for one pivot each, sequentially.

    Returns a mapping pivot -> combination of surviving basis vectors.
    Equations that reduce to zero (redundant) are skipped.
    """
    mapping: dict[BasisVector, LinCombo] = {}
    for eq in equations:
        red = _apply(eq, mapping)
        scale = max((abs(c) for c in eq.terms.values()), default=0.0)
        red = LinCombo({v: c for v, c in red.terms.items() if abs(c) > tol * max(scale, 1.0)})
        pivot = _pick_pivot(red, mapping)
        if pivot is None:
            continue
        cp = red.terms[pivot]
        expr = LinCombo({v: -c / cp for v, c in red.terms.items() if v != pivot})
        step = {pivot: expr}
        for k in list(mapping):
            mapping[k] = _apply(mapping[k], step)
        mapping[pivot] = expr
    return mapping


# ---------------------------------------------------------------------------
# Assembly


class _FunctionalBuilder:
    def __init__(self, index: Mapping[BasisVector, int], vindex: Mapping[ValueSymbol, int]):
        self.index = index
        self.vindex = vindex

    def gram_terms(self, expr: QuadExpr, block: int = 0) -> dict:
        terms: dict = {}
        for (a, b), c in expr.gram.items():
            i, j = self.index[a], self.index[b]
            if i > j:
                i, j = j, i
            terms[(block, i, j)] = terms.get((block, i, j), 0.0) + c
        return terms

    def value_terms(self, expr: QuadExpr) -> dict:
        return {self.vindex[s]: c for s, c in expr.values.items()}


def _functional(entries: dict, free: dict, drop: float = 0.0) -> Functional:
    e = tuple((b, i, j, c) for (b, i, j), c in sorted(entries.items()) if abs(c) > drop)
    f = tuple((k, c) for k, c in sorted(free.items()) if abs(c) > drop)
    return Functional(e, f)


def _row_key(fn: Functional) -> tuple[tuple, float]:
    """Scale-free fingerprint of a linear functional (leading coefficient 1)."""
    lead = fn.entries[0][3] if fn.entries else fn.free[0][1]
    key = tuple((b, i, j, round(c / lead, 10)) for b, i, j, c in fn.entries)
    key += tuple(("v", k, round(c / lead, 10)) for k, c in fn.free)
    return key, lead


def assemble(problem: PepProblem, substitute: bool = True) -> SdpData:
    """Lower a PEP to conic data: one PSD Gram block, LMI blocks, free values.

    With ``substitute`` (default) every :class:`VectorEquality` is eliminated
    by expressing one of its basis vectors through the others; otherwise it
    becomes the scalar equality ``<vec, vec> = 0``.  The Gram block then lives
    on the surviving basis; ``SdpData.lift`` maps it back to all vectors.
    """
    if not problem.vectors and not problem.values:
        raise PepError("cannot assemble an empty problem")
    problem.close()

    equations = [c.vec for c in problem.constraints if isinstance(c, VectorEquality)] if substitute else []
    mapping = elimination_map(equations) if equations else {}
    basis = [v for v in problem.vectors if v not in mapping]
    index = {v: i for i, v in enumerate(basis)}
    vindex = {s: i for i, s in enumerate(problem.values)}
    fb = _FunctionalBuilder(index, vindex)

    lift = np.zeros((len(problem.vectors), len(basis)))
    for r, v in enumerate(problem.vectors):
        if v in mapping:
            for u, c in mapping[v].terms.items():
                lift[r, index[u]] = c
        else:
            lift[r, index[v]] = 1.0

    def lower(e: QuadExpr) -> QuadExpr:
        return e.substitute(mapping) if mapping else e

    rows: list[Row] = []
    names: list[str] = []
    seen: dict[tuple, float] = {}
    drop = 1e-14
    for k, c in enumerate(problem.constraints):
        if isinstance(c, VectorEquality):
            if substitute:
                continue
            c = c.as_scalar()
        e = lower(c.expr)
        fn = _functional(fb.gram_terms(e), fb.value_terms(e), drop)
        if not fn.entries and not fn.free:
            if c.relation == "==" and abs(e.constant) > 1e-9 or c.relation == "<=" and e.constant > 1e-9:
                raise PepError(f"constraint {c.name or k} is trivially infeasible")
            continue
        if c.relation == "==":
            # repeated equalities make the KKT system singular
            key, scale = _row_key(fn)
            if key in seen:
                if abs(seen[key] - (-e.constant) / scale) > 1e-9 * max(1.0, abs(seen[key])):
                    raise PepError(f"constraint {c.name or k} contradicts an earlier equality")
                continue
            seen[key] = -e.constant / scale
        rows.append(Row(fn, c.relation, -e.constant + 0.0))
        names.append(c.name or f"c{k}")

    blocks = [("gram", len(basis))]
    for m, lmi in enumerate(problem.lmis):
        b = len(blocks)
        blocks.append((lmi.name or f"lmi{m}", lmi.size))
        sym = lmi.symmetrized()
        for k in range(lmi.size):
            for l in range(k, lmi.size):
                e = lower(sym[k][l])
                entries = {(b, k, l): 1.0}
                for key, c in fb.gram_terms(e).items():
                    entries[key] = entries.get(key, 0.0) - c
                free = {i: -c for i, c in fb.value_terms(e).items()}
                rows.append(Row(_functional(entries, free, drop), "==", e.constant + 0.0))
                names.append(f"{lmi.name or f'lmi{m}'}[{k},{l}]")

    obj = lower(problem.objective)
    objective = _functional(fb.gram_terms(obj), fb.value_terms(obj), drop)
    return SdpData(
        blocks=tuple(blocks),
        n_free=len(problem.values),
        objective=objective,
        rows=tuple(rows),
        objective_offset=obj.constant,
        row_names=tuple(names),
        vector_labels=tuple(v.label for v in problem.vectors),
        value_labels=tuple(f"f{s.agent}({s.point_label})" for s in problem.values),
        lift=lift,
    )


def full_gram(sdp: SdpData, gram_block: np.ndarray) -> np.ndarray:
    """Gram matrix over all declared vectors from the (reduced) solved block."""
    L = sdp.lift if sdp.lift is not None else np.eye(gram_block.shape[0])
    return L @ gram_block @ L.T


def gram_lookup(problem: PepProblem, G: np.ndarray):
    """Callable ``(a, b) -> G[a, b]`` indexed by declaration order."""
    pos = {v: i for i, v in enumerate(problem.vectors)}
    return lambda a, b: float(G[pos[a], pos[b]])


def value_lookup(problem: PepProblem, fv: Sequence[float]) -> dict[ValueSymbol, float]:
    return {s: float(fv[i]) for i, s in enumerate(problem.values)}
