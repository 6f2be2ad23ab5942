"""Solver backends for :class:`SdpData`."""

from __future__ import annotations

from dataclasses import dataclass

from decpep.solver.data import STATUSES, Functional, Row, SdpData, Solution, SolverError

ENGINES = ("auto", "cvxopt", "clarabel")


@dataclass(frozen=True)
class SolveOptions:
    feas_tol: float = 1e-8
    rel_gap: float = 1e-8
    max_iter: int = 500
    verbose: bool = False
    # in-process engine; "auto" tries CVXOPT, then Clarabel if CVXOPT stalls
    engine: str = "auto"

    def __post_init__(self):
        if self.engine not in ENGINES:
            raise ValueError(f"unknown engine {self.engine!r}")
        if not (self.feas_tol > 0 and self.rel_gap > 0 and self.max_iter > 0):
            raise ValueError("tolerances and max_iter must be positive")


def _embedded(data: SdpData, opts: SolveOptions) -> Solution:
    from decpep.solver.clarabel_backend import solve_clarabel
    from decpep.solver.cvxopt_backend import solve_cvxopt

    args = (data, opts.feas_tol, opts.rel_gap, opts.max_iter, opts.verbose)
    if opts.engine == "clarabel":
        return solve_clarabel(*args)
    first = solve_cvxopt(*args)
    if opts.engine == "cvxopt" or first.status != "numerical-limit":
        return first
    second = solve_clarabel(*args)
    if second.status != "numerical-limit":
        return second
    # a CVXOPT exception leaves no iterate, Clarabel's last one is better than zeros
    return second if first.message.startswith("cvxopt:") else first


def solve(data: SdpData, opts: SolveOptions | None = None, backend: str = "embedded") -> Solution:
    """Solve ``data`` with the in-process backend or an external command.

    ``backend`` is ``"embedded"`` or ``"external:<command template>"``; see
    :mod:`decpep.solver.external` for the template syntax.
    """
    opts = opts or SolveOptions()
    if backend == "embedded":
        return _embedded(data, opts)
    if backend.startswith("external:"):
        from decpep.solver.external import solve_external

        return solve_external(data, backend[len("external:"):], opts)
    raise ValueError(f"unknown backend {backend!r}")


__all__ = ["ENGINES", "STATUSES", "Functional", "Row", "SdpData", "Solution", "SolveOptions",
           "SolverError", "solve"]
