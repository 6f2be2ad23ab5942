import json

import numpy as np
import pytest

from decpep.algorithms import DgdParams, Formulation, build_dgd
from decpep.consensus import SpectralRange, build_w1, is_member
from decpep.core import PepError
from decpep.recovery import (factorize_gram, feasibility_report, recover_matrix_lsq,
                             recover_matrix_sdp, worst_case_instance)


@pytest.fixture(scope="module")
def dgd_spectral():
    built = build_dgd(DgdParams(3, 5, Formulation.symmetric(0.8)))
    return built, built.solve()


def test_factorize_full_rank():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((4, 4))
    G = A.T @ A
    P = factorize_gram(G)
    assert P.shape == (4, 4)
    assert np.linalg.norm(P.T @ P - G) <= 1e-8 * np.linalg.norm(G)


def test_factorize_truncates_rank():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((2, 5))
    P = factorize_gram(A.T @ A)
    assert P.shape[0] == 2
    assert np.allclose(P.T @ P, A.T @ A, atol=1e-10)


def test_factorize_rejects_indefinite():
    with pytest.raises(PepError):
        factorize_gram(np.diag([1.0, -0.1]))


def test_lsq_example():
    W, rem = recover_matrix_lsq([[2.0], [0.0]], [[1.0], [1.0]])
    assert np.allclose(W, [[0.5, 0.0], [0.5, 0.0]])
    assert rem == pytest.approx(0.0, abs=1e-12)


def test_lsq_exact_recovery():
    rng = np.random.default_rng(2)
    W = build_w1(4, 0.3)
    X = rng.standard_normal((4, 6))
    What, rem = recover_matrix_lsq(X, W @ X)
    assert np.allclose(What, W)
    assert rem < 1e-10


def test_sdp_recovery_example():
    W, res, status = recover_matrix_sdp([[1.0], [-1.0]], [[-0.5], [0.5]], SpectralRange(-0.6, 0.6))
    assert np.allclose(W, [[0.25, 0.75], [0.75, 0.25]], atol=1e-5)
    assert res < 1e-5
    assert status.startswith("optimal")
    assert is_member(W, SpectralRange(-0.6, 0.6), 1e-6)


def test_sdp_recovery_projects_into_class():
    # data generated by a matrix outside the range: best member leaves a residual
    X = np.array([[1.0], [-1.0]])
    Y = build_w1(2, 0.9) @ X
    W, res, _ = recover_matrix_sdp(X, Y, SpectralRange(-0.5, 0.5))
    assert is_member(W, SpectralRange(-0.5, 0.5), 1e-6)
    assert res == pytest.approx(np.linalg.norm(Y - (build_w1(2, 0.5) @ X)), rel=1e-4)


def test_worst_case_recovers_w1(dgd_spectral):
    built, res = dgd_spectral
    wc = worst_case_instance(res)
    g = wc.groups[0]
    assert g.member
    assert g.remainder <= 1e-4 * np.linalg.norm(g.Y_r)
    assert np.allclose(g.W, build_w1(3, 0.8), atol=1e-4)
    assert wc.residuals["consensus"] <= 1e-5
    assert max(v for k, v in wc.residuals.items() if k != "consensus") <= 1e-6


def test_recovery_soundness_loop(dgd_spectral):
    _, res = dgd_spectral
    wc = worst_case_instance(res)
    W = wc.groups[0].W
    again = build_dgd(DgdParams(3, 5, Formulation.exact(W))).solve()
    assert again.objective == pytest.approx(res.objective, rel=1e-3)


def test_corrupted_gram_is_flagged(dgd_spectral):
    built, res = dgd_spectral
    wc = worst_case_instance(res)
    key = next(k for k in wc.coordinates if k.startswith("g1(x0)"))
    wc.coordinates[key] = wc.coordinates[key] + 0.1 * np.eye(wc.d)[0]
    rep = feasibility_report(wc, built, wc.groups[0].W)
    assert max(rep.values()) > 1e-3


def test_corrupted_gram_entry_is_flagged(dgd_spectral):
    built, res = dgd_spectral
    G = res.solution.gram.copy()
    n = G.shape[0]
    flagged = 0
    # entries touching tight constraints; a slack entry can stay feasible
    for i, j in [(0, 0), (0, n - 1), (2, 3)]:
        H = G.copy()
        H[i, j] += 0.1
        H[j, i] = H[i, j]
        try:
            wc = worst_case_instance(res, gram=H, recover=False)
        except PepError:
            flagged += 1  # indefinite: rejected outright
            continue
        flagged += max(wc.residuals.values()) > 1e-3
    assert flagged == 3


def test_json_layout(dgd_spectral):
    _, res = dgd_spectral
    doc = json.loads(worst_case_instance(res).to_json())
    assert set(doc) == {"dimension", "objective", "coordinates", "values", "groups", "residuals"}
    g = doc["groups"][0]
    assert len(g["W"]) == 3 and len(g["X_r"]) == 3
    assert len(g["X_r"][0]) == doc["dimension"] * 4


def test_exact_instance_report_uses_given_matrix():
    W = build_w1(3, 0.5)
    built = build_dgd(DgdParams(3, 3, Formulation.exact(W)))
    wc = worst_case_instance(built.solve())
    assert wc.groups == []
    rep = feasibility_report(wc, built)
    assert max(rep.values()) < 1e-6
