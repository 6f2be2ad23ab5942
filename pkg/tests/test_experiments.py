import csv
import io
import json

import pytest

from decpep.core import PepError
from decpep.experiments import (COLUMNS, TABLE_I, ExperimentConfig, records_csv, run,
                                scale_worst_case, strip_timing, theoretical_dgd_bound)


@pytest.mark.parametrize("K, lam, expected, tol", [(10, 0.92, 8.22, 0.005), (936, 0.92, 0.8499, 1e-4),
                                                   (4, 0.0, 1.5, 1e-12)])
def test_theory_values(K, lam, expected, tol):
    assert theoretical_dgd_bound(1, 1, K, lam, 1) == pytest.approx(expected, abs=tol)


def test_theory_first_k_below_085():
    assert theoretical_dgd_bound(1, 1, 936, 0.92) < 0.85 < theoretical_dgd_bound(1, 1, 935, 0.92)


def test_theory_matches_unscaled_form():
    # with h = R / D the bound is (D^2 + R^2)/(2 sqrt K) + 2 R^2 / (sqrt K (1 - lam))
    D, R, K, lam = 2.0, 3.0, 7, 0.4
    direct = (D ** 2 + R ** 2) / (2 * K ** 0.5) + 2 * R ** 2 / (K ** 0.5 * (1 - lam))
    assert theoretical_dgd_bound(D, R, K, lam, R / D) == pytest.approx(direct)


def test_theory_errors():
    with pytest.raises(PepError):
        theoretical_dgd_bound(1, 1, 4, 1.0)
    with pytest.raises(PepError):
        theoretical_dgd_bound(1, 1, 0, 0.5)


def test_scaling():
    assert scale_worst_case(0.7, 2.0, 0.5) == 0.7
    assert scale_worst_case(0.7, 2.0, 3.0) == pytest.approx(4.2)


def test_table_i_literal():
    assert [r["alpha"] for r in TABLE_I] == [1e-4, 2.6e-4, 1e-3]
    assert TABLE_I[2]["one_minus_theoretical_rate"] is None


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig(algorithm="accdngd", K=[2, 4], lam=[0.0, 0.5], eta=[0.05], beta=[0.0, 0.61])
    path = tmp_path / "c.json"
    path.write_text(cfg.to_json())
    assert ExperimentConfig.load(path) == cfg
    assert len(cfg.points()) == 2 * 2 * 2


def test_config_validation():
    with pytest.raises(PepError):
        ExperimentConfig(algorithm="extra")
    with pytest.raises(PepError):
        ExperimentConfig(K=[])
    with pytest.raises(PepError):
        ExperimentConfig(lam=[float("nan")])
    with pytest.raises(PepError):
        ExperimentConfig(mode="rate")
    with pytest.raises(PepError):
        ExperimentConfig.from_json(json.dumps({"algorithm": "dgd", "bogus": 1}))


def test_sweep_columns_and_failures_recorded():
    cfg = ExperimentConfig(N=[2], K=[2], lam=[0.5, 1.0])
    recs = run(cfg)
    text = records_csv(recs)
    rows = list(csv.reader(io.StringIO(text)))
    assert tuple(rows[0]) == COLUMNS
    assert len(rows) == 3
    assert rows[1][COLUMNS.index("status")] == "optimal"
    # lambda = 1 is outside the class definition: recorded, sweep continues
    assert rows[2][COLUMNS.index("status")].startswith("error")


def test_outputs_deterministic_modulo_timing(tmp_path):
    cfg = ExperimentConfig(N=[2, 3], K=[2], lam=[0.5], recover=True, mc_samples=5, seed=3)
    a = run(cfg, out=tmp_path / "a")
    b = run(cfg, out=tmp_path / "b")
    ta = (tmp_path / "a" / "results.csv").read_text()
    tb = (tmp_path / "b" / "results.csv").read_text()
    assert strip_timing(ta) == strip_timing(tb)
    assert a[0]["member"] is True


def test_json_output(tmp_path):
    cfg = ExperimentConfig(N=[2], K=[2], lam=[0.5], format="json", name="pt")
    run(cfg, out=tmp_path)
    recs = json.loads((tmp_path / "pt.json").read_text())
    assert list(recs[0]) == list(COLUMNS)
    assert json.loads((tmp_path / "pt.config.json").read_text())["name"] == "pt"


def test_rate_mode_point():
    cfg = ExperimentConfig(algorithm="diging", mode="rate", N=[1], lam=[0.0], alpha=[1.0], beta_c=[0.0])
    rec = run(cfg)[0]
    assert rec["objective"] == pytest.approx(0.81, abs=1e-6)
    assert rec["K"] == 1 and rec["beta_c"] == 0.0


def test_parallel_keeps_order():
    cfg = ExperimentConfig(N=[2], K=[1, 2, 3], lam=[0.5], parallel=3)
    recs = run(cfg)
    assert [r["K"] for r in recs] == [1, 2, 3]
