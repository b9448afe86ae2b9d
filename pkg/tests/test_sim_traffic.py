import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from learnsim.errors import SchemaError, ValidationError
from learnsim.params import decode
from learnsim.seeding import derive
from learnsim.sim.traffic import (
    BLOCK_FEATURES,
    CHANNELS_PER_BLOCK,
    MAX_LENGTH,
    MIN_LENGTH,
    N_FEATURES,
    SCHEMA,
    SceneDescription,
    TrafficSimulator,
    adversarial_theta,
    expected_length,
    make_theta,
    render_features,
    sample_scene,
    validation_theta,
)

SIM = TrafficSimulator()


def pinned_length(n):
    p = np.full(MAX_LENGTH - MIN_LENGTH + 1, 1e-9)
    p[n - MIN_LENGTH] = 1.0
    return p / p.sum()


def test_schema_dimensions():
    assert SCHEMA.total_dim == 1 + 5 + 1 + 11 + 4 == 22
    assert N_FEATURES == 18 * 7 + 3 + 4 == 133


def test_no_cars_when_presence_vanishes():
    theta = make_theta(car_presence=1e-12)
    d = SIM.generate(theta, 2000, 1)
    assert d.labels.sum() == 0


def test_every_block_full_when_presence_saturates():
    theta = make_theta(car_presence=1 - 1e-12, lengths=pinned_length(10))
    d = SIM.generate(theta, 2000, 2)
    assert np.all(d.labels.sum(axis=1) == 10)


def test_expected_total_cars_monte_carlo():
    theta = validation_theta()
    dec = decode(SCHEMA, theta)
    n = 100_000
    d = SIM.generate(theta, n, 3)
    analytic = oracles.expected_total_cars(dec["length"], dec["car_presence"])
    assert analytic == pytest.approx(expected_length(dec) * dec["car_presence"], rel=1e-12)
    assert abs(d.labels.sum(axis=1).mean() - analytic) <= 0.01 * analytic


def test_per_type_counts_monte_carlo():
    theta = validation_theta()
    dec = decode(SCHEMA, theta)
    d = SIM.generate(theta, 100_000, 4)
    mean_counts = d.labels.mean(axis=0)
    expected = expected_length(dec) * dec["car_presence"] * dec["car_type"]
    np.testing.assert_allclose(mean_counts, expected, rtol=0.02)


def test_mc_expectation_matches_formula_within_3_se():
    dec = decode(SCHEMA, validation_theta())
    analytic = oracles.expected_total_cars(dec["length"], dec["car_presence"])
    mean, se = oracles.mc_expectation(lambda i: sample_scene(dec, derive(20, i)), lambda s: int(s.counts().sum()), 20_000)
    assert abs(mean - analytic) <= 3 * se


def test_uniform_length_marginal_chi_square():
    d = SIM.generate(np.zeros(22), 100_000, 5)
    lengths = np.array(d.meta["lengths"])
    counts = np.bincount(lengths - MIN_LENGTH, minlength=11)
    assert oracles.chi_square_uniform_pvalue(counts.tolist()) > 0.01


def test_empty_scene_without_noise():
    scene = SceneDescription(8, "T", (0,) * 8, (False,) * 8, 1)
    x = render_features(scene, 0, noise_stds=(0.0, 0.3, 0.6, 1.0))
    slots = x[:BLOCK_FEATURES].reshape(MAX_LENGTH, CHANNELS_PER_BLOCK)
    expected = np.zeros((MAX_LENGTH, CHANNELS_PER_BLOCK))
    expected[:8, 6] = 1.0  # road-present flag
    np.testing.assert_array_equal(slots, expected)
    np.testing.assert_array_equal(x[BLOCK_FEATURES:], [0, 1, 0, 1, 0, 0, 0])


def test_car_channel_construction():
    stds = (0.1, 0.3, 0.6, 1.0)
    scene = SceneDescription(9, "X", (3,) + (0,) * 8, (False,) * 9, 1)
    x = render_features(scene, 6, stds)
    x0 = render_features(scene, 6, (0.0, 0.0, 0.0, 0.0))
    noise = x - x0
    assert x0[2] == 1.0 and x0[0] == x0[1] == x0[3] == x0[4] == 0.0
    np.testing.assert_allclose(x[:5], x0[:5] + noise[:5])
    assert np.all(np.abs(noise[:BLOCK_FEATURES]) > 0)
    np.testing.assert_array_equal(noise[BLOCK_FEATURES:], 0.0)


@pytest.mark.parametrize("weather", [1, 2, 3, 4])
def test_render_noise_difference_std(weather):
    stds = (0.1, 0.3, 0.6, 1.0)
    scene = SceneDescription(12, "L", (1, 0, 2, 0, 5, 0, 0, 4, 0, 0, 3, 0), (True, False) * 6, weather)
    n = 10_000
    diffs = np.array([render_features(scene, derive(1, i), stds) - render_features(scene, derive(2, i), stds) for i in range(n)])
    per_channel = diffs[:, :BLOCK_FEATURES].std(axis=0)
    target = math.sqrt(2) * stds[weather - 1]
    # std of a sample std is about sigma / sqrt(2n)
    tol = 4 * target / math.sqrt(2 * n)
    assert np.all(np.abs(per_channel - target) <= tol + 1e-12)


def test_labels_match_pre_noise_occupancy():
    scenes, x = SIM.sample(validation_theta(), 300, 7)
    d = SIM.generate(validation_theta(), 300, 7)
    np.testing.assert_array_equal(d.features, x)
    for i in range(300):
        s = scenes.scene(i)
        clean = render_features(s, 0, (0.0,) * 4)
        slots = clean[:BLOCK_FEATURES].reshape(MAX_LENGTH, CHANNELS_PER_BLOCK)
        np.testing.assert_array_equal(slots[:, :5].sum(axis=0), d.labels[i])
        assert d.labels[i].sum() <= s.length


def test_determinism():
    a = SIM.generate(validation_theta(), 40, 9)
    b = SIM.generate(validation_theta(), 40, 9)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_schema_mismatch_rejected():
    with pytest.raises(SchemaError):
        SIM.generate(np.zeros(21), 5, 0)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 30))
def test_scene_invariants(seed, scale):
    theta = np.random.default_rng(seed).normal(scale=scale, size=22)
    scenes, x = SIM.sample(theta, 50, seed)
    assert x.shape == (50, N_FEATURES)
    assert np.all(np.isfinite(x))
    counts = scenes.counts()
    assert np.all(counts >= 0)
    assert np.all(counts.sum(axis=1) <= scenes.length)
    assert np.all((scenes.length >= MIN_LENGTH) & (scenes.length <= MAX_LENGTH))
    beyond = np.arange(MAX_LENGTH)[None, :] >= scenes.length[:, None]
    assert not np.any(scenes.cars[beyond]) and not np.any(scenes.houses[beyond])


def test_scene_description_validation():
    with pytest.raises(ValidationError):
        SceneDescription(7, "L", (0,) * 7, (False,) * 7, 1)
    with pytest.raises(ValidationError):
        SceneDescription(8, "L", (0,) * 7, (False,) * 8, 1)
    with pytest.raises(ValidationError):
        SceneDescription(8, "Y", (0,) * 8, (False,) * 8, 1)
    with pytest.raises(ValidationError):
        SceneDescription(8, "L", (0,) * 8, (False,) * 8, 5)


def test_adversarial_preset_is_concentrated():
    dec = decode(SCHEMA, adversarial_theta())
    assert dec["car_type"][4] > 0.8 and dec["weather"][3] > 0.8
