"""Sanity checks on the reference computations themselves."""

import math
import random

import pytest

import oracles


def test_finite_difference_of_square():
    assert oracles.finite_diff_grad(lambda v: v[0] ** 2, [3.0], 1e-5)[0] == pytest.approx(6.0, abs=1e-8)


def test_finite_difference_of_constant_is_zero():
    assert oracles.finite_diff_grad(lambda v: 4.2, [1.0, -2.0, 0.5]) == [0.0, 0.0, 0.0]


def test_finite_difference_rejects_non_finite():
    with pytest.raises(ValueError):
        oracles.finite_diff_grad(lambda v: math.log(v[0]), [0.0], 1e-3)
    with pytest.raises(ValueError):
        oracles.finite_diff_grad(lambda v: v[0], [0.0], 0.0)


def test_mc_of_constant_has_zero_error():
    mean, se = oracles.mc_expectation(lambda i: i, lambda s: 1.0, 1000)
    assert mean == 1.0 and se == 0.0


def test_mc_bernoulli_half():
    rng = random.Random(0)
    mean, se = oracles.mc_expectation(lambda i: rng.random() < 0.5, float, 100_000)
    assert abs(mean - 0.5) <= 0.005
    assert se == pytest.approx(math.sqrt(0.25 / 100_000), rel=0.01)


def test_mc_requires_enough_draws():
    with pytest.raises(ValueError):
        oracles.mc_expectation(lambda i: i, float, 999)


def test_transforms():
    assert oracles.softmax([0.0, 0.0]) == [0.5, 0.5]
    assert math.fsum(oracles.softmax([1000.0, -1000.0, 3.0])) == pytest.approx(1.0)
    assert oracles.sigmoid(0.0) == 0.5 and oracles.sigmoid(-800) == 0.0
    assert oracles.softplus(0.0) == pytest.approx(math.log(2))


def test_gaussian_log_density_standard():
    assert oracles.gaussian_log_density([0.0], [0.0], 1.0) == pytest.approx(-0.5 * math.log(2 * math.pi))


def test_hand_update_toy():
    mean, b, adv = oracles.hand_policy_update([0.0], 0.5, [[1.0], [-1.0]], [2.0, 0.0], None, 0.1, 0.9)
    assert adv == [1.0, -1.0] and b == 1.0
    assert mean == [pytest.approx(0.2)]


def test_reference_gmm_point_is_deterministic_in_uniforms():
    means = [[[0.0, 0.0], [5.0, 5.0]], [[-5.0, 0.0], [0.0, -5.0]]]
    var = [[[1.0, 1.0]] * 2] * 2
    w = [[0.5, 0.5], [0.5, 0.5]]
    assert oracles.reference_gmm_point([0.9, 0.9, 0.5, 0.5], 0.5, means, var, w) == (5.0, 5.0, 0)
    assert oracles.reference_gmm_point([0.1, 0.1, 0.5, 0.5], 0.5, means, var, w) == (-5.0, 0.0, 1)


def test_expected_total_cars_uniform():
    assert oracles.expected_total_cars([1 / 11] * 11, 0.5) == pytest.approx(6.5)


def test_chi_square_and_trend():
    assert oracles.chi_square_uniform_pvalue([100] * 10) == pytest.approx(1.0)
    assert oracles.chi_square_uniform_pvalue([1000, 0, 0]) < 1e-6
    assert oracles.mann_kendall_pvalue(list(range(30))) < 1e-6
    rng = random.Random(1)
    assert oracles.mann_kendall_pvalue([rng.random() for _ in range(30)]) > 0.01
