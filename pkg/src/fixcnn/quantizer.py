"""Post-training conversion of float parameters to B-bit fixed point.

Scaling is per layer and power-of-two only (a hardware shift), with the
smallest exponent that still covers the layer's max magnitude. Codes are
round-half-away-from-zero with saturation. Weight codes are also
classified as zero / power-of-two / generic for the DSP cost model:
multiplying by 0 or +-2^k synthesizes to wires or shifts, only generic
constants consume a multiplier.
"""
from __future__ import annotations

import numpy as np

from .model import FixedPointFormat, FloatNetwork, QuantizedNetwork

ZERO = "zero"
POWER_OF_TWO = "power_of_two"
GENERIC = "generic"


def choose_format(values: np.ndarray, bits: int) -> FixedPointFormat:
    """Smallest exponent f with max|v| <= (2^(bits-1) - 1) * 2^f; 0 for all-zero."""
    if bits < 2:
        raise ValueError("bits must be >= 2")
    values = np.asarray(values, dtype=np.float64)
    if not np.all(np.isfinite(values)):
        raise ValueError("non-finite values")
    m = float(np.max(np.abs(values))) if values.size else 0.0
    if m == 0.0:
        return FixedPointFormat(bits, 0)
    top = float((1 << (bits - 1)) - 1)
    f = int(np.ceil(np.log2(m / top)))
    # guard against float rounding in the log: enforce minimality exactly
    while top * 2.0 ** (f - 1) >= m:
        f -= 1
    while top * 2.0 ** f < m:
        f += 1
    return FixedPointFormat(bits, f)


def quantize_to_format(values: np.ndarray, fmt: FixedPointFormat) -> np.ndarray:
    """Round-half-away-from-zero codes, saturated to the representable range."""
    scaled = np.asarray(values, dtype=np.float64) / 2.0 ** fmt.exponent
    codes = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(codes, fmt.min_code, fmt.max_code).astype(np.int64)


def quantize(net: FloatNetwork, bits: int) -> QuantizedNetwork:
    """Per-layer quantization of all weights and biases to `bits`-wide codes."""
    weight_formats, bias_formats = [], []
    conv_w_codes, conv_b_codes = [], []
    for w, b in zip(net.conv_weights, net.conv_biases):
        wf, bf = choose_format(w, bits), choose_format(b, bits)
        weight_formats.append(wf)
        bias_formats.append(bf)
        conv_w_codes.append(quantize_to_format(w, wf))
        conv_b_codes.append(quantize_to_format(b, bf))
    fc_wf, fc_bf = choose_format(net.fc_weights, bits), choose_format(net.fc_bias, bits)
    weight_formats.append(fc_wf)
    bias_formats.append(fc_bf)
    qnet = QuantizedNetwork(
        topology=net.topology,
        conv_weight_codes=conv_w_codes,
        conv_bias_codes=conv_b_codes,
        fc_weight_codes=quantize_to_format(net.fc_weights, fc_wf),
        fc_bias_codes=quantize_to_format(net.fc_bias, fc_bf),
        weight_formats=weight_formats,
        bias_formats=bias_formats,
        input_side=net.input_side,
    )
    qnet.check_codes()
    return qnet


def dequantize(qnet: QuantizedNetwork) -> FloatNetwork:
    """Float network holding the exact real values the codes represent."""
    conv_w = [
        c * 2.0 ** f.exponent for c, f in zip(qnet.conv_weight_codes, qnet.weight_formats)
    ]
    conv_b = [
        c * 2.0 ** f.exponent for c, f in zip(qnet.conv_bias_codes, qnet.bias_formats)
    ]
    net = FloatNetwork(
        topology=qnet.topology,
        conv_weights=conv_w,
        conv_biases=conv_b,
        fc_weights=qnet.fc_weight_codes * 2.0 ** qnet.weight_formats[3].exponent,
        fc_bias=qnet.fc_bias_codes * 2.0 ** qnet.bias_formats[3].exponent,
        input_side=qnet.input_side,
    )
    net.check_shapes()
    return net


def classify_code(code: int) -> str:
    """zero, power_of_two (|code| = 2^k) or generic."""
    if code == 0:
        return ZERO
    a = abs(int(code))
    return POWER_OF_TWO if a & (a - 1) == 0 else GENERIC


def count_generic(codes: np.ndarray) -> int:
    """Number of codes that would occupy a hardware multiplier."""
    a = np.abs(codes.astype(np.int64))
    nonzero = a != 0
    pow2 = nonzero & ((a & (a - 1)) == 0)
    return int(np.count_nonzero(nonzero & ~pow2))
