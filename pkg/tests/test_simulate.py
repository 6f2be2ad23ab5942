import numpy as np
import pytest

from decpep.algorithms import AccDngdParams, DgdParams, DigingParams, Formulation
from decpep.consensus import build_w1
from decpep.core import PepError
from decpep.simulate import (MaxAffine, Quadratic, minimize_max_affine_sum, monte_carlo_lower_bound,
                             run_accdngd, run_dgd, run_diging, sample_criteria,
                             sample_max_affine, sample_quadratic)

ABS = MaxAffine(np.array([[1.0], [-1.0]]), np.zeros(2))


@pytest.mark.parametrize("h", [0.25, 0.5, 1.0, 1.5, 2.0])
def test_dgd_hand_run(h):
    J = np.full((2, 2), 0.5)
    assert run_dgd([ABS, ABS], J, [1.0], [h], [0.0]) == pytest.approx(1 - h / 2)


def test_dgd_zero_step_gives_initial_gap():
    rng = np.random.default_rng(0)
    fs = [sample_max_affine(rng, 1.0, 2) for _ in range(3)]
    xs = minimize_max_affine_sum(fs)
    if xs is None:
        pytest.skip("unbounded sample")
    x0 = np.array([0.3, -0.2])
    W = build_w1(3, 0.5)
    gap = np.mean([f.value(x0) for f in fs]) - np.mean([f.value(xs) for f in fs])
    assert run_dgd(fs, W, x0, [0.0] * 4, xs) == pytest.approx(gap)


def test_max_affine_subgradients_bounded():
    rng = np.random.default_rng(1)
    for _ in range(20):
        f = sample_max_affine(rng, 2.0, 3)
        assert f.A.shape[0] <= 5
        assert np.linalg.norm(f.grad(rng.standard_normal(3))) <= 2.0 + 1e-12


def test_lp_minimizer():
    f1 = MaxAffine(np.array([[1.0], [-1.0]]), np.array([0.0, 0.0]))
    f2 = MaxAffine(np.array([[1.0], [-1.0]]), np.array([-2.0, 2.0]))  # |x - 2|
    xs = minimize_max_affine_sum([f1, f2])
    assert 0.0 - 1e-9 <= xs[0] <= 2.0 + 1e-9
    assert minimize_max_affine_sum([MaxAffine(np.array([[1.0]]), np.zeros(1))]) is None


def test_quadratic_in_class():
    rng = np.random.default_rng(2)
    q = sample_quadratic(rng, 0.1, 1.0, 4)
    ev = np.linalg.eigvalsh(q.A)
    assert ev.min() >= 0.1 - 1e-12 and ev.max() <= 1.0 + 1e-12


def test_diging_single_agent_quadratic():
    q = Quadratic(np.array([[0.5]]), np.array([0.0]))
    val = run_diging([q], np.ones((1, 1)), np.array([[1.0]]), 0.5, 3, np.array([0.0]))
    assert val == pytest.approx((1 - 0.25) ** 6)


def test_accdngd_single_agent_one_step():
    q = Quadratic(np.array([[1.0]]), np.array([-1.0]))  # minimizer 1
    p = AccDngdParams(1, 1, 0.3, Formulation.symmetric(0.0))
    val = run_accdngd([q], np.ones((1, 1)), p, np.array([1.0]), 1)
    # x1 = 0.3, f(x1) - f* = (1 - 0.3)^2 / 2
    assert val == pytest.approx(0.5 * 0.7 ** 2)


def test_streams_are_reproducible():
    p = DgdParams(3, 3, Formulation.symmetric(0.5))
    a = sample_criteria(p, 20, seed=4)
    b = sample_criteria(p, 20, seed=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, sample_criteria(p, 20, seed=5))


def test_lower_bounds_below_pep_values():
    from decpep.algorithms import build_dgd

    p = DgdParams(2, 3, Formulation.symmetric(0.5))
    assert monte_carlo_lower_bound(p, 50, seed=0) <= build_dgd(p).solve().objective + 1e-6


def test_exact_formulation_uses_given_matrix():
    p = DigingParams(2, 2, 0.3, Formulation.exact(build_w1(2, 0.4)))
    assert np.isfinite(monte_carlo_lower_bound(p, 10, seed=0))


def test_dimension_limit():
    with pytest.raises(PepError):
        sample_criteria(DgdParams(2, 2, Formulation.symmetric(0.5)), 2, dim=6)
