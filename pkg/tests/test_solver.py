import sys

import numpy as np
import pytest

from decpep.algorithms import DgdParams, Formulation, build_dgd
from decpep.solver import Functional, Row, SdpData, SolveOptions, SolverError, solve
from decpep.solver.sdpa import export_sdpa, import_sdpa, read_solution, write_solution

EXTERNAL = f"external:{sys.executable} -m decpep.solver.sdpa_solve {{input}} {{output}}"


def toy(rhs=2.0):
    g11 = Functional(((0, 0, 0, 1.0),))
    return SdpData((("G", 1),), 0, g11, (Row(g11, "<=", rhs),))


@pytest.mark.parametrize("engine", ["auto", "cvxopt", "clarabel"])
def test_toy_optimum(engine):
    sol = solve(toy(), SolveOptions(engine=engine))
    assert sol.status == "optimal"
    assert sol.objective == pytest.approx(2.0, abs=1e-7)
    assert sol.gram[0, 0] == pytest.approx(2.0, abs=1e-6)


@pytest.mark.parametrize("engine", ["cvxopt", "clarabel"])
def test_toy_infeasible(engine):
    assert solve(toy(-1.0), SolveOptions(engine=engine)).status == "infeasible"


def test_unbounded():
    # maximize G11 with no rows
    data = SdpData((("G", 1),), 0, Functional(((0, 0, 0, 1.0),)), ())
    assert solve(data, SolveOptions(engine="clarabel")).status == "unbounded"


def test_options_validated():
    with pytest.raises(ValueError):
        SolveOptions(engine="mosek")
    with pytest.raises(ValueError):
        SolveOptions(feas_tol=0.0)
    with pytest.raises(ValueError):
        solve(toy(), backend="carrier-pigeon")


def test_free_scalars_and_equalities():
    # maximize f s.t. f - G11 == 0, G11 + G22 <= 3, G12 == 1
    f_minus_g = Functional(((0, 0, 0, -1.0),), ((0, 1.0),))
    rows = (Row(f_minus_g, "==", 0.0),
            Row(Functional(((0, 0, 0, 1.0), (0, 1, 1, 1.0))), "<=", 3.0),
            Row(Functional(((0, 0, 1, 1.0),)), "==", 1.0))
    data = SdpData((("G", 2),), 1, Functional((), ((0, 1.0),)), rows)
    sol = solve(data)
    # G11 G22 >= 1 with G11 + G22 <= 3 -> G11 = (3 + sqrt 5) / 2
    assert sol.objective == pytest.approx((3 + 5 ** 0.5) / 2, rel=1e-7)
    assert np.linalg.eigvalsh(sol.gram).min() > -1e-8


def test_toy_export_layout():
    text = export_sdpa(toy())
    lines = text.splitlines()
    assert lines[0].startswith('"decpep')
    body = lines[1:]
    # rows, blocks, sizes (G plus the slack block), rhs, then entries
    assert body[:4] == ["1", "2", "1 -1", "2"]
    entries = body[4:]
    assert entries == ["0 1 1 1 1", "1 1 1 1 1", "1 2 1 1 1"]


def test_round_trip_exact(tmp_path):
    sdp = build_dgd(DgdParams(2, 2, Formulation.symmetric(0.5))).assemble()
    text = export_sdpa(sdp, tmp_path / "p.dat-s")
    back = import_sdpa(tmp_path / "p.dat-s")
    assert back == sdp
    assert export_sdpa(back) == text


def test_import_foreign_file():
    text = """* a plain SDPA problem
2
2
2 -1
1.0 2.0
0 1 1 1 1.0
0 1 2 2 1.0
1 1 1 1 1.0
1 1 2 2 1.0
2 1 1 2 0.5
2 2 1 1 1.0
"""
    data = import_sdpa(text)
    assert data.block_sizes == [2, 1]
    assert data.n_rows == 2
    # off-diagonal SDPA value 0.5 is a pair; our functional counts the entry once
    assert data.rows[1].functional.entries[0] == (0, 0, 1, 1.0)


def test_malformed_sdpa_rejected():
    with pytest.raises(ValueError):
        import_sdpa("1\n2\n3\n")
    with pytest.raises(ValueError):
        import_sdpa("1\n1\n2\n1.0\n0 1 1 1\n")


def test_solution_file_round_trip(tmp_path):
    data = toy()
    Y = [np.array([[2.0]]), np.array([[0.0]])]
    write_solution(tmp_path / "s", [1.0], Y)
    y, blocks, free = read_solution(tmp_path / "s", data)
    assert y.tolist() == [1.0]
    assert blocks[0][0, 0] == 2.0


def test_external_matches_embedded():
    sdp = build_dgd(DgdParams(2, 2, Formulation.symmetric(0.5))).assemble()
    ext = solve(sdp, backend=EXTERNAL)
    emb = solve(sdp)
    assert ext.status == "optimal"
    assert ext.objective == pytest.approx(emb.objective, abs=1e-6)


def test_external_missing_binary():
    with pytest.raises(SolverError):
        solve(toy(), backend="external:/nonexistent/solver {input} {output}")


def test_external_template_needs_placeholders():
    with pytest.raises(ValueError):
        solve(toy(), backend="external:csdp")


def test_deterministic():
    sdp = build_dgd(DgdParams(2, 2, Formulation.symmetric(0.5))).assemble()
    a, b = solve(sdp), solve(sdp)
    assert a.status == b.status
    assert abs(a.objective - b.objective) <= 1e-9


def _cvx_opts():
    return {"show_progress": False, "abstol": 1e-8, "reltol": 1e-8, "feastol": 1e-8, "maxiters": 200}


@pytest.mark.parametrize("form", [Formulation.symmetric(0.7), Formulation.symmetric(0.7, "full")])
def test_cvxopt_mappings_agree(form):
    from decpep.solver.cvxopt_backend import _solve_dual, _solve_primal

    data = build_dgd(DgdParams(3, 3, form)).assemble()
    d = _solve_dual(data, _cvx_opts())
    p = _solve_primal(data, _cvx_opts())
    assert d[0] == p[0] == "optimal"
    assert data.objective_value(d[2], d[3]) == pytest.approx(data.objective_value(p[2], p[3]), rel=1e-6)
    # recovered primal blocks are feasible and the row duals certify the value
    assert data.residuals(d[2], d[3]).max() < 1e-6
    _, _, rhs, _ = data.matrices()
    assert rhs @ d[4] == pytest.approx(data.objective_value(d[2], d[3]), rel=1e-6)


def test_cvxopt_dual_mapping_statuses():
    from decpep.solver.cvxopt_backend import _solve_dual

    assert _solve_dual(toy(-1.0), _cvx_opts())[0] == "infeasible"
    # free value that no row constrains: the mapping declines, the primal path decides
    data = SdpData((("G", 1),), 1, Functional((), ((0, 1.0),)), (Row(Functional(((0, 0, 0, 1.0),)), "<=", 1.0),))
    assert _solve_dual(data, _cvx_opts()) is None
