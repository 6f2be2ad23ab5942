"""Solver-neutral conic problem data and solutions.

The problem is always a maximization::

    maximize    <c, (X_1..X_B, f)> + offset
    subject to  <a_r, (X_1..X_B, f)>  (= or <=)  rhs_r
                X_b symmetric PSD,  f free

A linear functional addresses block entries by ``(block, i, j)`` with
``i <= j``; its coefficient multiplies the single entry ``X_b[i, j]`` (not the
symmetric pair sum).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

STATUSES = ("optimal", "infeasible", "unbounded", "numerical-limit")


@dataclass(frozen=True)
class Functional:
    entries: tuple[tuple[int, int, int, float], ...] = ()
    free: tuple[tuple[int, float], ...] = ()

    def evaluate(self, blocks, free_values) -> float:
        total = 0.0
        for b, i, j, c in self.entries:
            total += c * blocks[b][i, j]
        for k, c in self.free:
            total += c * free_values[k]
        return total


@dataclass(frozen=True)
class Row:
    functional: Functional
    relation: str
    rhs: float


@dataclass(frozen=True)
class SdpData:
    blocks: tuple[tuple[str, int], ...]
    n_free: int
    objective: Functional
    rows: tuple[Row, ...]
    objective_offset: float = 0.0
    # provenance metadata, not part of the conic problem
    row_names: tuple[str, ...] = field(default=(), compare=False, repr=False)
    vector_labels: tuple[str, ...] = field(default=(), compare=False, repr=False)
    value_labels: tuple[str, ...] = field(default=(), compare=False, repr=False)
    lift: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        for r in self.rows:
            if r.relation not in ("==", "<="):
                raise ValueError(f"bad relation {r.relation!r}")
        for b, i, j, _ in self._all_entries():
            if not 0 <= b < len(self.blocks) or not 0 <= i <= j < self.blocks[b][1]:
                raise ValueError(f"entry ({b}, {i}, {j}) outside block structure")

    def _all_entries(self):
        yield from self.objective.entries
        for r in self.rows:
            yield from r.functional.entries

    @property
    def block_sizes(self) -> list[int]:
        return [n for _, n in self.blocks]

    @property
    def n_rows(self) -> int:
        return len(self.rows)

    def summary(self) -> str:
        n_eq = sum(r.relation == "==" for r in self.rows)
        return (
            f"blocks={self.block_sizes} free={self.n_free} rows={self.n_rows} "
            f"(eq={n_eq}, ineq={self.n_rows - n_eq})"
        )

    # vectorization shared by backends --------------------------------------

    def layout(self) -> tuple[list[int], int]:
        """Offsets of each block in the upper-triangle column-major variable
        vector, and the offset of the free scalars."""
        offsets = []
        pos = 0
        for _, n in self.blocks:
            offsets.append(pos)
            pos += n * (n + 1) // 2
        return offsets, pos

    def matrices(self):
        """Sparse (objective, A, rhs, relations) over the stacked variable."""
        offsets, free0 = self.layout()
        nvar = free0 + self.n_free

        def pos(b, i, j):
            return offsets[b] + j * (j + 1) // 2 + i

        c = np.zeros(nvar)
        for b, i, j, v in self.objective.entries:
            c[pos(b, i, j)] += v
        for k, v in self.objective.free:
            c[free0 + k] += v
        ri, ci, vals = [], [], []
        for r, row in enumerate(self.rows):
            for b, i, j, v in row.functional.entries:
                ri.append(r)
                ci.append(pos(b, i, j))
                vals.append(v)
            for k, v in row.functional.free:
                ri.append(r)
                ci.append(free0 + k)
                vals.append(v)
        A = sp.csr_matrix((vals, (ri, ci)), shape=(self.n_rows, nvar))
        rhs = np.array([r.rhs for r in self.rows])
        rel = np.array([r.relation for r in self.rows])
        return c, A, rhs, rel

    def unpack(self, x: np.ndarray) -> tuple[list[np.ndarray], np.ndarray]:
        """Split a stacked variable vector into dense symmetric blocks + free."""
        offsets, free0 = self.layout()
        blocks = []
        for (_, n), off in zip(self.blocks, offsets):
            M = np.zeros((n, n))
            # column-major upper triangle == row-major lower triangle
            jl, il = np.tril_indices(n)
            M[il, jl] = x[off: off + n * (n + 1) // 2]
            M = M + np.triu(M, 1).T
            blocks.append(M)
        return blocks, np.asarray(x[free0: free0 + self.n_free], dtype=float)

    def residuals(self, blocks, free_values) -> np.ndarray:
        """Signed violation per row (positive = violated)."""
        out = np.empty(self.n_rows)
        for r, row in enumerate(self.rows):
            v = row.functional.evaluate(blocks, free_values) - row.rhs
            out[r] = abs(v) if row.relation == "==" else max(v, 0.0)
        return out

    def objective_value(self, blocks, free_values) -> float:
        return self.objective.evaluate(blocks, free_values) + self.objective_offset


@dataclass(frozen=True)
class Solution:
    status: str
    objective: float
    blocks: tuple[np.ndarray, ...] = field(repr=False)
    free: np.ndarray = field(repr=False)
    duals: np.ndarray | None = field(default=None, repr=False)
    solve_time: float = 0.0
    dual_objective: float | None = None
    solver: str = ""
    message: str = ""

    @property
    def ok(self) -> bool:
        return self.status == "optimal"

    @property
    def gram(self) -> np.ndarray:
        return self.blocks[0]


class SolverError(RuntimeError):
    """A solve could not produce any usable iterate."""
