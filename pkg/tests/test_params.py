import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

import oracles
from learnsim.errors import SchemaError, ValidationError
from learnsim.params import (
    BlockKind,
    ParamBlock,
    ParamSchema,
    check_theta,
    decode,
    encode_bernoulli,
    encode_categorical,
    inverse_softplus,
    softplus,
    validate_schema,
)

MIXED = ParamSchema.build(
    [
        ("cat", "categorical", 4),
        ("flag", "bernoulli", 1),
        ("mu", "gaussian_mean", 2),
        ("var", "gaussian_variance", 2),
    ]
)


def test_widths_follow_kinds():
    assert [b.width for b in MIXED.blocks] == [4, 1, 2, 2]
    assert [b.offset for b in MIXED.blocks] == [0, 4, 5, 7]
    assert MIXED.total_dim == 9


def test_uniform_logits_decode_to_uniform():
    s = ParamSchema.build([("c", "categorical", 4)])
    np.testing.assert_allclose(decode(s, np.zeros(4))["c"], [0.25] * 4, rtol=0, atol=1e-15)


def test_zero_bernoulli_logit_is_half():
    s = ParamSchema.build([("b", "bernoulli", 1)])
    assert decode(s, [0.0])["b"] == 0.5


def test_zero_raw_variance_is_ln2():
    s = ParamSchema.build([("v", "gaussian_variance", 1)])
    assert decode(s, [0.0])["v"][0] == pytest.approx(math.log(2), abs=1e-12)
    assert decode(s, [0.0])["v"][0] == pytest.approx(0.693147, abs=1e-6)


def test_mean_block_is_identity():
    theta = np.array([0, 0, 0, 0, 0, -3.5, 7.25, 0, 0], dtype=float)
    np.testing.assert_array_equal(decode(MIXED, theta)["mu"], [-3.5, 7.25])


def test_decode_matches_scalar_reference():
    rng = np.random.default_rng(3)
    for _ in range(20):
        theta = rng.normal(scale=4, size=MIXED.total_dim)
        d = decode(MIXED, theta)
        np.testing.assert_allclose(d["cat"], oracles.softmax(theta[:4].tolist()), rtol=1e-12)
        assert d["flag"] == pytest.approx(oracles.sigmoid(theta[4]), rel=1e-12)
        np.testing.assert_allclose(d["var"], [oracles.softplus(v) for v in theta[7:9]], rtol=1e-12)


def test_contiguous_two_blocks_ok():
    s = ParamSchema((ParamBlock("a", BlockKind.CATEGORICAL, 3, 0, 3), ParamBlock("b", BlockKind.BERNOULLI, 1, 3, 1)), 4)
    validate_schema(s)


@pytest.mark.parametrize(
    "blocks,total,msg",
    [
        ((ParamBlock("a", BlockKind.CATEGORICAL, 3, 0, 3), ParamBlock("b", BlockKind.BERNOULLI, 1, 2, 1)), 4, "overlaps"),
        ((ParamBlock("a", BlockKind.CATEGORICAL, 3, 0, 3), ParamBlock("b", BlockKind.BERNOULLI, 1, 4, 1)), 5, "gap"),
        ((ParamBlock("a", BlockKind.CATEGORICAL, 0, 0, 0),), 0, "arity"),
        ((ParamBlock("a", BlockKind.CATEGORICAL, 3, 0, 2),), 2, "width"),
        ((ParamBlock("a", BlockKind.BERNOULLI, 1, 0, 1), ParamBlock("a", BlockKind.BERNOULLI, 1, 1, 1)), 2, "duplicate"),
        ((ParamBlock("a", BlockKind.BERNOULLI, 1, 0, 1),), 3, "total_dim"),
        ((ParamBlock("a", BlockKind.GAUSSIAN_MEAN, 0, 0, 0),), 0, "size"),
    ],
)
def test_bad_schemas_rejected(blocks, total, msg):
    with pytest.raises(SchemaError, match=msg):
        validate_schema(ParamSchema(blocks, total))


def test_build_rejects_zero_arity_categorical():
    with pytest.raises(SchemaError):
        ParamSchema.build([("c", "categorical", 0)])


def test_dimension_mismatch_is_schema_error():
    with pytest.raises(SchemaError):
        decode(MIXED, np.zeros(MIXED.total_dim + 1))


@pytest.mark.parametrize("bad", [math.nan, math.inf, -math.inf])
def test_non_finite_is_validation_error(bad):
    theta = np.zeros(MIXED.total_dim)
    theta[5] = bad
    with pytest.raises(ValidationError):
        check_theta(MIXED, theta)


def test_encoders_round_trip():
    p = [0.1, 0.2, 0.3, 0.4]
    s = ParamSchema.build([("c", "categorical", 4), ("b", "bernoulli", 1), ("v", "gaussian_variance", 3)])
    v = np.array([1e-3, 0.5, 40.0])
    theta = np.concatenate([encode_categorical(p), [encode_bernoulli(0.9)], inverse_softplus(v)])
    d = decode(s, theta)
    np.testing.assert_allclose(d["c"], p, rtol=1e-12)
    assert d["b"] == pytest.approx(0.9, rel=1e-12)
    np.testing.assert_allclose(d["v"], v, rtol=1e-9)
    np.testing.assert_allclose(softplus(inverse_softplus(v)), v, rtol=1e-9)


finite = st.floats(min_value=-1e6, max_value=1e6, allow_nan=False)


@settings(max_examples=300, deadline=None)
@given(arrays(np.float64, MIXED.total_dim, elements=finite))
def test_decoded_invariants_hold_for_any_finite_vector(theta):
    d = decode(MIXED, theta)
    p = d["cat"]
    assert abs(p.sum() - 1.0) <= 1e-12
    assert np.all((p > 0) & (p < 1))
    assert 0.0 < d["flag"] < 1.0
    assert np.all(d["var"] > 0)
    np.testing.assert_array_equal(d["mu"], theta[5:7])


@settings(max_examples=100, deadline=None)
@given(arrays(np.float64, MIXED.total_dim, elements=finite))
def test_decode_is_deterministic(theta):
    a, b = decode(MIXED, theta), decode(MIXED, theta.copy())
    for k in a:
        np.testing.assert_array_equal(a[k], b[k])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.tuples(st.sampled_from(list(BlockKind)), st.integers(1, 6)), min_size=1, max_size=8))
def test_built_schemas_tile_contiguously(spec):
    s = ParamSchema.build([(f"b{i}", k, n) for i, (k, n) in enumerate(spec)])
    assert s.total_dim == sum(b.width for b in s.blocks)
    cursor = 0
    for b in s.blocks:
        assert b.offset == cursor
        cursor = b.stop


@settings(max_examples=200, deadline=None)
@given(
    arrays(np.float64, MIXED.total_dim, elements=st.floats(-1e3, 1e3)),
    st.floats(-1e3, 1e3),
)
def test_softmax_shift_invariance_within_block(theta, c):
    shifted = theta.copy()
    shifted[MIXED.block("cat").slice()] += c
    np.testing.assert_allclose(decode(MIXED, shifted)["cat"], decode(MIXED, theta)["cat"], rtol=0, atol=1e-9)


def test_extreme_logits_stay_inside_open_interval():
    theta = np.zeros(MIXED.total_dim)
    theta[:4] = [1e3, -1e3, 0, 0]
    theta[4] = 1e3
    d = decode(MIXED, theta)
    assert d["cat"].min() > 0 and d["cat"].max() < 1
    assert d["flag"] < 1.0
