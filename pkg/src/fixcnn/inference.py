"""Bit-true integer inference: the tensor-level reference backend.

Activations are unsigned `activation_bits` codes with a per-layer
power-of-two exponent frozen from float statistics on a calibration
subset. Convolution and inner-product accumulate in wide signed
integers; biases are shift-aligned to the accumulator exponent; ReLU
output is rounded and saturated back to activation codes. The softmax
is omitted: the predicted class is the argmax of the 10 fully-connected
accumulators, ties broken toward the lowest class index.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dataset import Dataset
from .model import FloatNetwork, QuantizedNetwork, fc_input_size
from .trainer import _im2col, forward_trace, maxpool2


@dataclass(frozen=True)
class DatapathConfig:
    """Integer datapath widths plus the frozen activation exponents.

    act_exponents holds (input, after_layer1, after_layer2, after_layer3).
    """

    activation_bits: int = 8
    accumulator_bits: int = 32
    act_exponents: tuple[int, int, int, int] = (-7, -4, -4, -4)
    check_overflow: bool = False

    @property
    def act_max(self) -> int:
        return (1 << self.activation_bits) - 1


def _min_unsigned_exponent(max_value: float, bits: int) -> int:
    """Smallest e with max_value <= (2^bits - 1) * 2^e."""
    if max_value <= 0.0:
        return 0
    top = float((1 << bits) - 1)
    e = int(math.ceil(math.log2(max_value / top)))
    while top * 2.0 ** (e - 1) >= max_value:
        e -= 1
    while top * 2.0 ** e < max_value:
        e += 1
    return e


def required_accumulator_bits(net: QuantizedNetwork, activation_bits: int) -> int:
    """Width that provably avoids accumulator overflow for this network."""
    t = net.topology
    fan_in = max(9, 9 * t.n1, 9 * t.n2, fc_input_size(t, net.input_side))
    return activation_bits + net.bits + int(math.ceil(math.log2(fan_in))) + 1


def calibrate_datapath(
    net: FloatNetwork,
    calib_images: np.ndarray,
    activation_bits: int = 8,
    accumulator_bits: int = 32,
) -> DatapathConfig:
    """Freeze per-layer activation exponents from float ranges on a subset."""
    trace = forward_trace(net, calib_images)
    exps = [_min_unsigned_exponent(1.0, activation_bits)]
    for key in ("a1", "a2", "a3"):
        exps.append(_min_unsigned_exponent(float(trace[key].max()), activation_bits))
    return DatapathConfig(activation_bits, accumulator_bits, tuple(exps))


def quantize_input(images: np.ndarray, dp: DatapathConfig) -> np.ndarray:
    codes = np.floor(images / 2.0 ** dp.act_exponents[0] + 0.5)
    return np.clip(codes, 0, dp.act_max).astype(np.int64)


def align_bias(bias_codes: np.ndarray, bias_exp: int, acc_exp: int) -> np.ndarray:
    """Shift bias codes to the accumulator exponent (floor on right shifts)."""
    shift = bias_exp - acc_exp
    if shift >= 0:
        return bias_codes.astype(np.int64) << shift
    return bias_codes.astype(np.int64) >> (-shift)


def requantize_relu(acc: np.ndarray, acc_exp: int, out_exp: int, act_max: int) -> np.ndarray:
    """ReLU then round-half-up rescale to the unsigned activation format."""
    acc = np.maximum(acc, 0)
    d = out_exp - acc_exp
    if d > 0:
        acc = (acc + (1 << (d - 1))) >> d
    elif d < 0:
        acc = acc << (-d)
    return np.minimum(acc, act_max)


def _conv_same_int(x: np.ndarray, w_codes: np.ndarray) -> np.ndarray:
    n, _, h, wd = x.shape
    o = w_codes.shape[0]
    out = _im2col(x) @ w_codes.reshape(o, -1).T  # exact int64 matmul
    return out.reshape(n, h, wd, o).transpose(0, 3, 1, 2)


def _check_acc(acc: np.ndarray, dp: DatapathConfig) -> None:
    if dp.check_overflow:
        limit = 1 << (dp.accumulator_bits - 1)
        peak = int(np.abs(acc).max()) if acc.size else 0
        if peak >= limit:
            raise RuntimeError(
                f"accumulator overflow: |{peak}| >= 2^{dp.accumulator_bits - 1}"
            )


def forward_codes(qnet: QuantizedNetwork, dp: DatapathConfig, images: np.ndarray) -> dict:
    """Integer forward pass over a batch; returns activations and FC accumulators."""
    t: dict = {"u0": quantize_input(images, dp)}
    u = t["u0"]
    in_exp = dp.act_exponents[0]
    for l in range(3):
        w_exp = qnet.weight_formats[l].exponent
        acc_exp = w_exp + in_exp
        acc = _conv_same_int(u, qnet.conv_weight_codes[l])
        acc += align_bias(qnet.conv_bias_codes[l], qnet.bias_formats[l].exponent, acc_exp)[
            None, :, None, None
        ]
        _check_acc(acc, dp)
        out_exp = dp.act_exponents[l + 1]
        u = requantize_relu(acc, acc_exp, out_exp, dp.act_max)
        t[f"acc{l + 1}"] = acc
        if l < 2:
            u, _ = maxpool2(u)
        t[f"u{l + 1}"] = u
        in_exp = out_exp
    flat = u.reshape(u.shape[0], -1)
    fc_acc_exp = qnet.weight_formats[3].exponent + in_exp
    fc = flat @ qnet.fc_weight_codes.T
    fc += align_bias(qnet.fc_bias_codes, qnet.bias_formats[3].exponent, fc_acc_exp)[None, :]
    _check_acc(fc, dp)
    t["fc"] = fc
    return t


def forward_reference(qnet: QuantizedNetwork, dp: DatapathConfig, images: np.ndarray) -> np.ndarray:
    """Predicted classes for a batch (or a single (1, s, s) image)."""
    if images.ndim == 3:
        images = images[None]
    return np.argmax(forward_codes(qnet, dp, images)["fc"], axis=1)


def evaluate_tpr(
    qnet: QuantizedNetwork, dp: DatapathConfig, data: Dataset, batch_size: int = 512
) -> float:
    """Top-1 accuracy of the integer reference backend on a dataset."""
    if len(data) == 0:
        raise ValueError("cannot evaluate on an empty dataset")
    hits = 0
    for start in range(0, len(data), batch_size):
        images = data.images[start : start + batch_size]
        labels = data.labels[start : start + batch_size]
        hits += int(np.sum(forward_reference(qnet, dp, images) == labels))
    return hits / len(data)


def datapath_to_doc(dp: DatapathConfig) -> dict:
    return {
        "activation_bits": dp.activation_bits,
        "accumulator_bits": dp.accumulator_bits,
        "act_exponents": list(dp.act_exponents),
    }


def datapath_from_doc(doc: dict) -> DatapathConfig:
    return DatapathConfig(
        activation_bits=doc["activation_bits"],
        accumulator_bits=doc["accumulator_bits"],
        act_exponents=tuple(doc["act_exponents"]),
    )
