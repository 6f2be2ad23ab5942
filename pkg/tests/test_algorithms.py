import math

import numpy as np
import pytest

from decpep.algorithms import (AccDngdParams, DgdParams, DigingParams, Formulation,
                               accdngd_alpha_sequence, beta_grid, build_accdngd, build_dgd,
                               build_diging, rate_problem_diging)
from decpep.consensus import build_w1
from decpep.core import PepError
from decpep.experiments import theoretical_dgd_bound
from decpep.simulate import MaxAffine, run_dgd


def test_step_sizes():
    p = DgdParams(3, 4, Formulation.symmetric(0.5), h=0.5, D=2.0, R=4.0)
    assert p.step_sizes() == [2.0 * 0.5 / (4.0 * 2.0)] * 4
    q = DgdParams(3, 2, Formulation.symmetric(0.5), steps=[0.3, 0.1])
    assert q.step_sizes() == [0.3, 0.1]
    with pytest.raises(PepError):
        DgdParams(3, 2, Formulation.symmetric(0.5), steps=[0.3])


def test_formulation_needs_one_model():
    with pytest.raises(PepError):
        Formulation()
    assert Formulation.exact(np.eye(2)).kind == "exact"
    assert Formulation.symmetric(0.3).kind == "spectral"


def test_dgd_single_agent_between_run_and_theory():
    K, h = 4, 1.0
    p = DgdParams(1, K, Formulation.symmetric(0.0), h=h)
    val = build_dgd(p).solve().objective
    f = MaxAffine(np.array([[1.0], [-1.0]]), np.zeros(2))
    run = run_dgd([f], np.ones((1, 1)), [1.0], p.step_sizes(), [0.0])
    assert run <= val + 1e-7
    assert val <= theoretical_dgd_bound(1, 1, K, 0.0, h) + 1e-9


def test_dgd_exact_averaging_equals_zero_range():
    N, K = 3, 3
    a = build_dgd(DgdParams(N, K, Formulation.exact(np.full((N, N), 1 / N)))).solve().objective
    b = build_dgd(DgdParams(N, K, Formulation.symmetric(0.0))).solve().objective
    assert a == pytest.approx(b, rel=1e-6)


def test_dgd_exact_below_spectral():
    lam = 0.5
    e = build_dgd(DgdParams(3, 3, Formulation.exact(build_w1(3, lam)))).solve().objective
    s = build_dgd(DgdParams(3, 3, Formulation.symmetric(lam))).solve().objective
    assert e <= s + 1e-7


def test_dgd_optimum_anchor_is_harmless():
    f = Formulation.symmetric(0.5)
    a = build_dgd(DgdParams(2, 2, f, anchor_optimum=True)).solve().objective
    b = build_dgd(DgdParams(2, 2, f, anchor_optimum=False)).solve().objective
    assert a == pytest.approx(b, rel=1e-6)


def test_dgd_trajectory_labels():
    b = build_dgd(DgdParams(2, 3, Formulation.symmetric(0.5)))
    assert "x[3][2]" in b.trajectories and "x_av" in b.trajectories
    # the first step acts on the shared x0 and needs no consensus column
    assert len(b.groups) == 1 and b.groups[0].n_steps == 2


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_diging_single_agent_is_gradient_descent(alpha):
    mu, L, K = 0.1, 1.0, 2
    p = DigingParams(1, K, alpha, Formulation.symmetric(0.0), mu=mu, L=L, E=0.0)
    val = build_diging(p).solve().objective
    assert val == pytest.approx(max(abs(1 - alpha * mu), abs(1 - alpha * L)) ** (2 * K), rel=1e-6)


def test_diging_policies_build_groups():
    f = Formulation.symmetric(0.5)
    tv = build_diging(DigingParams(2, 3, 0.1, f))
    const = build_diging(DigingParams(2, 3, 0.1, f, policy="constant"))
    assert len(tv.groups) == 3
    assert len(const.groups) == 1
    # a shared matrix is a special case of time-varying ones
    assert const.solve().objective <= tv.solve().objective + 1e-7


def test_diging_validation():
    with pytest.raises(PepError):
        DigingParams(2, 1, 0.1, Formulation.symmetric(0.5), mu=1.0, L=1.0)
    with pytest.raises(PepError):
        DigingParams(2, 1, 0.1, Formulation.symmetric(0.5), policy="random")


@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.5])
def test_rate_single_agent(alpha):
    p = DigingParams(1, 1, alpha, Formulation.symmetric(0.0))
    theta = rate_problem_diging(p, 0.0).solve().objective
    assert theta == pytest.approx(max(abs(1 - alpha * 0.1), abs(1 - alpha)) ** 2, abs=1e-6)


def test_beta_grid_centered_on_default():
    g = beta_grid(1e-3, 1.0, points=13)
    assert len(g) == 13
    assert g[6] == pytest.approx(1e-3)
    assert g[0] == pytest.approx(1e-6) and g[-1] == pytest.approx(1.0)


def test_alpha_sequence_recurrence():
    eta, beta, k0, L, K = 0.5, 0.61, 1.0, 1.0, 10
    a = accdngd_alpha_sequence(eta, beta, k0, L, K)
    assert len(a) == K + 1
    assert a[0] == pytest.approx(math.sqrt(eta * L))
    etas = [eta / (k + k0) ** beta for k in range(K + 1)]
    for k in range(K):
        assert a[k + 1] ** 2 == pytest.approx(etas[k + 1] / etas[k] * (1 - a[k + 1]) * a[k] ** 2, rel=1e-12)
        assert 0 < a[k + 1] < 1


def test_alpha_sequence_constant_step_decays_like_two_over_k():
    a = accdngd_alpha_sequence(0.05, 0.0, 1.0, 1.0, 400)
    assert a[400] * 400 == pytest.approx(2.0, rel=0.05)


def test_accdngd_validation():
    with pytest.raises(PepError):
        AccDngdParams(2, 3, 1.5, Formulation.symmetric(0.5))
    with pytest.raises(PepError):
        AccDngdParams(2, 3, 0.5, Formulation.symmetric(0.5), s_init="global")


def test_accdngd_single_agent_one_step():
    # one accelerated step from the origin is a gradient step of size eta
    eta = 0.3
    val = build_accdngd(AccDngdParams(1, 1, eta, Formulation.symmetric(0.0))).solve().objective
    assert val == pytest.approx(1.0 / (4 * eta + 2), rel=1e-6)


def test_accdngd_local_init_is_unbounded():
    p = AccDngdParams(2, 2, 0.5, Formulation.symmetric(0.5), s_init="local")
    assert build_accdngd(p).solve().status in ("unbounded", "numerical-limit")


def test_accdngd_spectral_above_exact():
    lam = 0.5
    e = build_accdngd(AccDngdParams(2, 3, 0.5, Formulation.exact(build_w1(2, lam)), beta=0.61)).solve()
    s = build_accdngd(AccDngdParams(2, 3, 0.5, Formulation.symmetric(lam), beta=0.61)).solve()
    assert e.objective <= s.objective + 1e-7
