import json
import subprocess
import sys

import pytest

from decpep.cli import main
from decpep.experiments import ExperimentConfig
from decpep.solver.sdpa import import_sdpa


def test_theory(capsys):
    assert main(["theory", "--D", "1", "--R", "1", "--K", "4", "--lam", "0", "--h", "1"]) == 0
    assert capsys.readouterr().out.strip() == "1.5"


def test_theory_invalid_lambda(capsys):
    assert main(["theory", "--K", "4", "--lam", "1"]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_flag_rejected(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["analyze", "--bogus"])
    assert exc.value.code == 2
    assert "usage" in capsys.readouterr().err


def test_analyze_save_and_recover(tmp_path, capsys):
    sol = tmp_path / "sol.json"
    rc = main(["analyze", "--algo", "dgd", "--N", "3", "--K", "3", "--lam", "0.8", "--save", str(sol)])
    out = capsys.readouterr().out
    assert rc == 0
    assert "objective:" in out and "theory:" in out
    rc = main(["recover", str(sol), "--out", str(tmp_path)])
    assert rc == 0
    doc = json.loads((tmp_path / "worst_case.json").read_text())
    assert doc["groups"][0]["member"] is True


def test_rate(capsys):
    rc = main(["rate", "--algo", "diging", "--N", "1", "--alpha", "1.0", "--lam", "0", "--beta-c", "0"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "theta=0.81" in out


def test_sweep_writes_csv(tmp_path, capsys):
    cfg = ExperimentConfig(N=[2], K=[1, 2], lam=[0.5], name="mini")
    (tmp_path / "c.json").write_text(cfg.to_json())
    rc = main(["sweep", "--config", str(tmp_path / "c.json"), "--out", str(tmp_path / "o")])
    assert rc == 0
    lines = (tmp_path / "o" / "mini.csv").read_text().splitlines()
    assert len(lines) == 3


def test_sweep_requires_config(capsys):
    assert main(["sweep"]) == 2


def test_simulate(capsys):
    rc = main(["simulate", "--N", "2", "--K", "2", "--lam", "0.5", "--samples", "5", "--seed", "1"])
    assert rc == 0
    assert "lower bound" in capsys.readouterr().out


def test_export_sdp(tmp_path, capsys):
    target = tmp_path / "p.dat-s"
    assert main(["export-sdp", "--N", "2", "--K", "2", "--lam", "0.5", "--output", str(target)]) == 0
    assert import_sdpa(target).n_rows > 0


def test_external_solver_flag(capsys):
    cmd = f"external:{sys.executable} -m decpep.solver.sdpa_solve {{input}} {{output}}"
    rc = main(["analyze", "--N", "2", "--K", "2", "--lam", "0.5", "--solver", cmd])
    assert rc == 0
    assert "status: optimal" in capsys.readouterr().out


def test_console_script():
    out = subprocess.run([sys.executable, "-m", "decpep.cli", "theory", "--K", "10", "--lam", "0.92"],
                         capture_output=True, text=True, check=True).stdout
    assert out.strip().startswith("8.2")
