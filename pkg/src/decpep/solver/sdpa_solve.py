"""CSDP-compatible command line solver for SDPA sparse files.

    python3 -m decpep.solver.sdpa_solve problem.dat-s solution.sol [--engine clarabel|cvxopt]

Writes the multipliers on the first line and then primal blocks as
``2 block i j value``; the exit status is 0/1/2/3 for
optimal/infeasible/unbounded/numerical-limit.
"""

from __future__ import annotations

import argparse
import sys

import numpy as np

from decpep.solver.data import SdpData
from decpep.solver.sdpa import import_sdpa, sdpa_primal_blocks, write_solution

_CODES = {"optimal": 0, "infeasible": 1, "unbounded": 2, "numerical-limit": 3}


def _solve(data: SdpData, engine: str, tol: float):
    if engine == "cvxopt":
        from decpep.solver.cvxopt_backend import solve_cvxopt

        return solve_cvxopt(data, tol, tol)
    from decpep.solver.clarabel_backend import solve_clarabel

    return solve_clarabel(data, tol, tol)


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="python3 -m decpep.solver.sdpa_solve")
    ap.add_argument("input")
    ap.add_argument("output")
    ap.add_argument("--engine", choices=("clarabel", "cvxopt"), default="clarabel")
    ap.add_argument("--tol", type=float, default=1e-8)
    args = ap.parse_args(argv)

    data = import_sdpa(args.input)
    sol = _solve(data, args.engine, args.tol)
    y = sol.duals if sol.duals is not None else np.zeros(data.n_rows)
    write_solution(args.output, y, sdpa_primal_blocks(data, sol.blocks, sol.free))
    print(f"{sol.status} objective={sol.objective!r} time={sol.solve_time:.3f}s ({sol.message})")
    return _CODES[sol.status]


if __name__ == "__main__":
    sys.exit(main())
