import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fixcnn.model import FixedPointFormat, Topology
from fixcnn.quantizer import (GENERIC, POWER_OF_TWO, ZERO, choose_format, classify_code,
                              count_generic, dequantize, quantize, quantize_to_format)
from fixcnn.trainer import init_network


def test_choose_format_examples():
    assert choose_format(np.array([1.0, -0.5]), 5).exponent == -3
    assert choose_format(np.zeros(4), 7) == FixedPointFormat(7, 0)
    assert choose_format(np.array([15.0]), 5).exponent == 0


@given(st.lists(st.floats(-1e6, 1e6, allow_nan=False), min_size=1, max_size=50),
       st.integers(2, 16))
def test_choose_format_is_minimal_and_covering(values, bits):
    arr = np.array(values)
    fmt = choose_format(arr, bits)
    m = np.max(np.abs(arr))
    top = (1 << (bits - 1)) - 1
    assert m <= top * 2.0 ** fmt.exponent
    if m > 0:
        assert m > top * 2.0 ** (fmt.exponent - 1)


def test_quantize_to_format_rounds_half_away():
    fmt = FixedPointFormat(5, -4)
    assert quantize_to_format(np.array([0.30]), fmt)[0] == 5  # 4.8 -> 5
    assert quantize_to_format(np.array([0.0]), fmt)[0] == 0
    assert quantize_to_format(np.array([0.28125]), fmt)[0] == 5  # 4.5 -> 5
    assert quantize_to_format(np.array([-0.28125]), fmt)[0] == -5


def test_dequantization_error_bound():
    rng = np.random.default_rng(0)
    for bits in range(3, 8):
        v = rng.normal(0, 1, 200)
        fmt = choose_format(v, bits)
        codes = quantize_to_format(v, fmt)
        err = np.abs(v - codes * 2.0 ** fmt.exponent)
        assert err.max() <= 2.0 ** (fmt.exponent - 1) + 1e-15


def test_quantize_codes_within_symmetric_range():
    net = init_network(Topology(2, 4, 6), seed=1)
    for bits in range(3, 8):
        qnet = quantize(net, bits)
        top = (1 << (bits - 1)) - 1
        for codes in [*qnet.conv_weight_codes, qnet.fc_weight_codes]:
            assert np.abs(codes).max() <= top


def test_round_trip_idempotent():
    net = init_network(Topology(2, 4, 6), seed=2)
    for bits in (3, 5, 7):
        q1 = quantize(net, bits)
        q2 = quantize(dequantize(q1), bits)
        assert q1.weight_formats == q2.weight_formats
        for a, b in zip(q1.conv_weight_codes, q2.conv_weight_codes):
            assert np.array_equal(a, b)
        assert np.array_equal(q1.fc_weight_codes, q2.fc_weight_codes)
        assert np.array_equal(q1.fc_bias_codes, q2.fc_bias_codes)


@settings(max_examples=25)
@given(st.integers(0, 2 ** 31), st.integers(3, 7))
def test_monotone_refinement(seed, bits):
    # one more bit never increases mean dequantization error
    rng = np.random.default_rng(seed)
    v = rng.normal(0, 1, 100)

    def mean_err(b):
        fmt = choose_format(v, b)
        return np.abs(v - quantize_to_format(v, fmt) * 2.0 ** fmt.exponent).mean()

    assert mean_err(bits + 1) <= mean_err(bits) + 1e-15


def test_negation_symmetry():
    net = init_network(Topology(2, 4, 6), seed=3)
    q1 = quantize(net, 5)
    for p in net.parameters():
        p *= -1.0
    q2 = quantize(net, 5)
    for a, b in zip(q1.conv_weight_codes, q2.conv_weight_codes):
        assert np.array_equal(a, -b)
    assert np.array_equal(q1.fc_weight_codes, -q2.fc_weight_codes)


def test_classify_code():
    assert classify_code(0) == ZERO
    assert classify_code(-8) == POWER_OF_TWO
    assert classify_code(6) == GENERIC
    assert classify_code(1) == POWER_OF_TWO
    assert classify_code(-16) == POWER_OF_TWO
    assert classify_code(-6) == GENERIC


def test_count_generic_matches_scalar_classifier():
    rng = np.random.default_rng(4)
    codes = rng.integers(-16, 16, size=200)
    expected = sum(1 for c in codes if classify_code(int(c)) == GENERIC)
    assert count_generic(codes) == expected


def test_choose_format_rejects_bad_input():
    with pytest.raises(ValueError):
        choose_format(np.array([np.inf]), 5)
    with pytest.raises(ValueError):
        choose_format(np.array([1.0]), 1)
