import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from learnsim.errors import SchemaError, ValidationError
from learnsim.mtm import KernelClassifier, TrainConfig
from learnsim.seeding import derive, uniform_rows
from learnsim.sim import GmmWorld, LabeledDataset, generate
from learnsim.sim.gmm import UNIFORMS_PER_SAMPLE

WORLD = GmmWorld()


def test_schema_layout():
    s = WORLD.schema
    assert s.total_dim == 16
    assert s.names[:2] == ["class0_comp0_mean", "class0_comp0_var"]


def test_same_seed_same_dataset():
    theta = np.random.default_rng(0).normal(size=16)
    a = WORLD.generate(theta, 50, 3)
    b = generate(WORLD, theta, 50, 3)
    np.testing.assert_array_equal(a.features, b.features)
    np.testing.assert_array_equal(a.labels, b.labels)


def test_single_sample():
    assert len(WORLD.generate(np.zeros(16), 1, 0)) == 1


def test_zero_size_rejected():
    with pytest.raises(ValidationError):
        WORLD.generate(np.zeros(16), 0, 0)


def test_wrong_theta_length_rejected():
    with pytest.raises(SchemaError):
        WORLD.generate(np.zeros(15), 10, 0)


def test_prefix_stability():
    theta = np.random.default_rng(1).normal(size=16)
    np.testing.assert_array_equal(WORLD.generate(theta, 30, 5).features, WORLD.generate(theta, 80, 5).features[:30])


def test_sim_class_ratio_matches_prior():
    d = WORLD.generate(np.zeros(16), 10_000, 8)
    assert abs(d.labels.mean() - 0.5) <= 3 * math.sqrt(0.25 / 10_000)


def test_real_class_fraction_band():
    d = WORLD.sample_real(10_000, 9)
    assert 0.485 <= d.labels.mean() <= 0.515


def test_degenerate_real_variances_sit_on_means():
    w = GmmWorld(real_variances=np.zeros((2, 3, 2)))
    d = w.sample_real(500, 1)
    for x, y in zip(d.features, d.labels):
        assert any(np.array_equal(x, m) for m in w.real_means[y])


def test_nearest_mean_rule_on_separated_world():
    w = GmmWorld(
        real_means=np.array([[[0.0, 0.0]], [[10.0, 10.0]]]),
        real_variances=np.full((2, 1, 2), 1e-4),
        real_weights=np.ones((2, 1)),
    )
    d = w.sample_real(400, 2)
    pred = (np.linalg.norm(d.features - 10.0, axis=1) < np.linalg.norm(d.features, axis=1)).astype(int)
    assert np.all(pred == d.labels)


def test_components_clustered_where_encoded():
    means = np.array([[[5.0, 5.0], [5.0, 5.0]], [[-3.0, 0.0], [-3.0, 0.0]]])
    theta = WORLD.encode_sim(means, np.full((2, 2, 2), 1e-6))
    d = WORLD.generate(theta, 400, 4)
    np.testing.assert_allclose(d.features[d.labels == 0], 5.0, atol=0.01)


def test_sim_components_round_trip():
    rng = np.random.default_rng(5)
    means = rng.normal(size=(2, 2, 2))
    var = rng.uniform(0.1, 3, size=(2, 2, 2))
    m2, v2 = WORLD.sim_components(WORLD.encode_sim(means, var))
    np.testing.assert_allclose(m2, means, rtol=1e-12)
    np.testing.assert_allclose(v2, var, rtol=1e-9)


def test_per_class_mean_matches_average_of_components():
    rng = np.random.default_rng(6)
    means = rng.normal(scale=2, size=(2, 2, 2))
    var = rng.uniform(0.2, 1.5, size=(2, 2, 2))
    d = WORLD.generate(WORLD.encode_sim(means, var), 100_000, 10)
    for c in (0, 1):
        x = d.features[d.labels == c]
        expected = means[c].mean(axis=0)
        # variance of a two-component equal mixture, per coordinate
        mix_var = var[c].mean(axis=0) + means[c].var(axis=0)
        bound = 3 * np.sqrt(mix_var / len(x))
        assert np.all(np.abs(x.mean(axis=0) - expected) <= bound)


@pytest.mark.parametrize("seed", range(20))
def test_matches_reference_sampler(seed):
    rng = np.random.default_rng(100 + seed)
    theta = rng.normal(size=16)
    d = WORLD.generate(theta, 25, seed)
    means, var = WORLD.sim_components(theta)
    u = uniform_rows(seed, 25, UNIFORMS_PER_SAMPLE)
    weights = [[0.5, 0.5], [0.5, 0.5]]
    for i in range(25):
        x0, x1, y = oracles.reference_gmm_point(u[i].tolist(), 0.5, means.tolist(), var.tolist(), weights)
        assert d.labels[i] == y
        np.testing.assert_allclose(d.features[i], [x0, x1], rtol=1e-9, atol=1e-9)


def test_real_matches_reference_sampler():
    d = WORLD.sample_real(200, 77)
    u = uniform_rows(77, 200, UNIFORMS_PER_SAMPLE)
    for i in range(200):
        x0, x1, y = oracles.reference_gmm_point(
            u[i].tolist(), WORLD.prior, WORLD.real_means.tolist(), WORLD.real_variances.tolist(), WORLD.real_weights.tolist()
        )
        assert d.labels[i] == y
        np.testing.assert_allclose(d.features[i], [x0, x1], rtol=1e-9, atol=1e-9)


def test_meta_round_trips_decoded_params():
    theta = np.random.default_rng(2).normal(size=16)
    d = WORLD.generate(theta, 5, 1)
    means, var = WORLD.sim_components(theta)
    np.testing.assert_allclose(d.meta["decoded"]["class1_comp1_var"], var[1, 1])
    np.testing.assert_allclose(d.meta["decoded"]["class0_comp0_mean"], means[0, 0])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(-50, 50), st.integers(1, 300))
def test_never_nan(seed, shift, m):
    theta = np.random.default_rng(seed).normal(size=16) + shift
    assert np.all(np.isfinite(WORLD.generate(theta, m, seed).features))


def test_invalid_world_rejected():
    with pytest.raises(ValueError):
        GmmWorld(real_weights=np.array([[0.5, 0.5, 0.5], [0.2, 0.3, 0.5]]))
    with pytest.raises(ValueError):
        GmmWorld(prior=1.5)


def test_overlay_beats_far_placement():
    """Components on top of real mass train a better classifier than components far away."""
    model = KernelClassifier(gamma=0.5)
    cfg = TrainConfig(epochs=20, batch_size=32, step_size=0.5)
    val = WORLD.sample_real(500, derive(0, "val"))
    overlay = WORLD.encode_sim(WORLD.real_means[:, :2], WORLD.real_variances[:, :2])
    far = WORLD.encode_sim(WORLD.real_means[:, :2] + 10.0, WORLD.real_variances[:, :2])
    for s in range(5):
        scores = []
        for theta in (overlay, far):
            data = WORLD.generate(theta, 200, derive(s, "data"))
            state = model.train(None, data, cfg, derive(s, "train"))
            scores.append(model.evaluate(state, val))
        assert scores[0] > scores[1]


def test_dataset_csv_round_trip(tmp_path):
    d = WORLD.generate(np.zeros(16), 20, 3)
    back = LabeledDataset.from_csv(d.to_csv(tmp_path / "d.csv"))
    np.testing.assert_array_equal(back.features, d.features)
    np.testing.assert_array_equal(back.labels, d.labels)
