"""External-process backend: SDPA file in, CSDP-style solution file out.

The command template is formatted with ``{input}`` and ``{output}``, e.g.
``csdp {input} {output}``.  Exit codes follow CSDP: 0 solved, 1 primal
infeasible, 2 dual infeasible, 3 partial success, anything else a failure.
The package ships a compatible solver::

    python3 -m decpep.solver.sdpa_solve {input} {output}
"""

from __future__ import annotations

import shlex
import subprocess
import tempfile
import time
from pathlib import Path

import numpy as np

from decpep.solver.data import SdpData, Solution, SolverError
from decpep.solver.sdpa import export_sdpa, solution_from_file

_EXIT = {0: "optimal", 1: "infeasible", 2: "unbounded", 3: "numerical-limit"}


def solve_external(data: SdpData, template: str, opts=None, timeout: float | None = None) -> Solution:
    if "{input}" not in template or "{output}" not in template:
        raise ValueError("command template needs {input} and {output} placeholders")
    with tempfile.TemporaryDirectory(prefix="decpep-") as tmp:
        inp = Path(tmp) / "problem.dat-s"
        out = Path(tmp) / "problem.sol"
        export_sdpa(data, inp)
        cmd = [part.format(input=str(inp), output=str(out)) for part in shlex.split(template)]
        t0 = time.perf_counter()
        try:
            proc = subprocess.run(cmd, capture_output=True, text=True, timeout=timeout)
        except FileNotFoundError as exc:
            raise SolverError(f"external solver not found: {cmd[0]}") from exc
        elapsed = time.perf_counter() - t0
        status = _EXIT.get(proc.returncode)
        name = Path(cmd[0]).name
        if status is None or not out.exists():
            tail = (proc.stderr or proc.stdout).strip().splitlines()[-3:]
            if not out.exists():
                nb = len(data.blocks)
                return Solution("numerical-limit", np.nan,
                                tuple(np.zeros((n, n)) for _, n in data.blocks[:nb]),
                                np.zeros(data.n_free), None, elapsed, None, name,
                                f"exit {proc.returncode}: {' | '.join(tail)}")
            status = "numerical-limit"
        return solution_from_file(out, data, status, elapsed, name, f"exit {proc.returncode}")
