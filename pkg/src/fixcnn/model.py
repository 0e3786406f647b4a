"""Core domain types: topology, fixed-point formats, float and quantized networks.

Network family: three 3x3 convolution layers (N1, N2, N3 output channels),
each followed by ReLU, with 2x2 stride-2 max pooling after the first two,
then a 10-way inner product. Convolutions zero-pad to keep spatial size
("same"), pooling floors odd sizes, so a 28x28 input walks 28 -> 14 -> 7.
"""
from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

SCHEMA_VERSION = 1


@dataclass(frozen=True)
class Topology:
    """Per-layer output channel counts of the fixed-depth network."""

    n1: int
    n2: int
    n3: int
    kernel: int = 3
    pool: int = 2
    fc_outputs: int = 10

    def __post_init__(self):
        if min(self.n1, self.n2, self.n3) < 1:
            raise ValueError(f"channel counts must be >= 1, got {self}")
        if self.kernel != 3 or self.pool != 2 or self.fc_outputs != 10:
            raise ValueError("kernel=3, pool=2, fc_outputs=10 are fixed")

    @property
    def channels(self) -> tuple[int, int, int, int]:
        """Channel counts including the single grayscale input plane."""
        return (1, self.n1, self.n2, self.n3)

    def conv_pairs(self) -> list[tuple[int, int]]:
        """(in_channels, out_channels) per conv layer."""
        c = self.channels
        return [(c[0], c[1]), (c[1], c[2]), (c[2], c[3])]

    def key(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)


def fc_input_size(topology: Topology, input_side: int = 28) -> int:
    """Fan-in of the inner-product layer: n3 channels of the twice-pooled map."""
    side = (input_side // 2) // 2
    return topology.n3 * side * side


@dataclass(frozen=True)
class FixedPointFormat:
    """Signed two's-complement code of `bits` total width, value = code * 2^exponent."""

    bits: int
    exponent: int

    def __post_init__(self):
        if not 2 <= self.bits <= 16:
            raise ValueError(f"bits must be in [2, 16], got {self.bits}")

    @property
    def min_code(self) -> int:
        return -(1 << (self.bits - 1))

    @property
    def max_code(self) -> int:
        return (1 << (self.bits - 1)) - 1

    def contains(self, code: int) -> bool:
        return self.min_code <= code <= self.max_code


def real_value(code: int, fmt: FixedPointFormat) -> float:
    """Real value of a code under a format; rejects out-of-range codes."""
    if not fmt.contains(code):
        raise ValueError(f"code {code} outside [{fmt.min_code}, {fmt.max_code}]")
    return float(code) * 2.0 ** fmt.exponent


@dataclass
class FloatNetwork:
    """Trained 64-bit parameters.

    conv_weights[l] has shape (out_ch, in_ch, 3, 3); fc_weights has shape
    (10, fc_input_size). All arrays are float64.
    """

    topology: Topology
    conv_weights: list[np.ndarray]
    conv_biases: list[np.ndarray]
    fc_weights: np.ndarray
    fc_bias: np.ndarray
    input_side: int = 28

    def check_shapes(self) -> None:
        pairs = self.topology.conv_pairs()
        if len(self.conv_weights) != 3 or len(self.conv_biases) != 3:
            raise ValueError("expected 3 conv layers")
        for l, (cin, cout) in enumerate(pairs):
            if self.conv_weights[l].shape != (cout, cin, 3, 3):
                raise ValueError(
                    f"conv{l + 1} weights {self.conv_weights[l].shape} != {(cout, cin, 3, 3)}"
                )
            if self.conv_biases[l].shape != (cout,):
                raise ValueError(f"conv{l + 1} bias shape {self.conv_biases[l].shape}")
        fc_in = fc_input_size(self.topology, self.input_side)
        if self.fc_weights.shape != (10, fc_in):
            raise ValueError(f"fc weights {self.fc_weights.shape} != (10, {fc_in})")
        if self.fc_bias.shape != (10,):
            raise ValueError(f"fc bias shape {self.fc_bias.shape}")
        for arr in self.parameters():
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite parameter value")

    def parameters(self) -> list[np.ndarray]:
        return [*self.conv_weights, *self.conv_biases, self.fc_weights, self.fc_bias]


@dataclass
class QuantizedNetwork:
    """Integer parameter codes plus the per-layer formats that decode them.

    Layer order for formats: conv1, conv2, conv3, fc.
    """

    topology: Topology
    conv_weight_codes: list[np.ndarray]
    conv_bias_codes: list[np.ndarray]
    fc_weight_codes: np.ndarray
    fc_bias_codes: np.ndarray
    weight_formats: list[FixedPointFormat]
    bias_formats: list[FixedPointFormat]
    input_side: int = 28

    @property
    def bits(self) -> int:
        return self.weight_formats[0].bits

    def check_codes(self) -> None:
        groups = [
            *zip(self.conv_weight_codes, self.weight_formats[:3]),
            *zip(self.conv_bias_codes, self.bias_formats[:3]),
            (self.fc_weight_codes, self.weight_formats[3]),
            (self.fc_bias_codes, self.bias_formats[3]),
        ]
        for codes, fmt in groups:
            if codes.size and (codes.min() < fmt.min_code or codes.max() > fmt.max_code):
                raise ValueError(f"codes outside representable range of {fmt}")


def _encode_array(arr: np.ndarray) -> dict:
    return {"shape": list(arr.shape), "data": arr.ravel().tolist()}


def _decode_array(doc: dict, dtype) -> np.ndarray:
    arr = np.asarray(doc["data"], dtype=dtype).reshape(doc["shape"])
    return arr


def network_to_json(net: FloatNetwork | QuantizedNetwork) -> str:
    """Serialize either network flavor to a single JSON document."""
    doc: dict = {
        "schema_version": SCHEMA_VERSION,
        "topology": {"n1": net.topology.n1, "n2": net.topology.n2, "n3": net.topology.n3},
        "input_side": net.input_side,
    }
    if isinstance(net, FloatNetwork):
        doc["kind"] = "float"
        doc["conv_weights"] = [_encode_array(w) for w in net.conv_weights]
        doc["conv_biases"] = [_encode_array(b) for b in net.conv_biases]
        doc["fc_weights"] = _encode_array(net.fc_weights)
        doc["fc_bias"] = _encode_array(net.fc_bias)
    elif isinstance(net, QuantizedNetwork):
        doc["kind"] = "quantized"
        doc["conv_weight_codes"] = [_encode_array(w) for w in net.conv_weight_codes]
        doc["conv_bias_codes"] = [_encode_array(b) for b in net.conv_bias_codes]
        doc["fc_weight_codes"] = _encode_array(net.fc_weight_codes)
        doc["fc_bias_codes"] = _encode_array(net.fc_bias_codes)
        doc["weight_formats"] = [[f.bits, f.exponent] for f in net.weight_formats]
        doc["bias_formats"] = [[f.bits, f.exponent] for f in net.bias_formats]
    else:
        raise TypeError(f"cannot serialize {type(net)}")
    return json.dumps(doc, sort_keys=True, separators=(",", ":"))


def network_from_json(text: str) -> FloatNetwork | QuantizedNetwork:
    doc = json.loads(text)
    if doc.get("schema_version") != SCHEMA_VERSION:
        raise ValueError(f"unsupported schema_version {doc.get('schema_version')}")
    topo = Topology(**doc["topology"])
    side = doc["input_side"]
    if doc["kind"] == "float":
        net: FloatNetwork | QuantizedNetwork = FloatNetwork(
            topology=topo,
            conv_weights=[_decode_array(w, np.float64) for w in doc["conv_weights"]],
            conv_biases=[_decode_array(b, np.float64) for b in doc["conv_biases"]],
            fc_weights=_decode_array(doc["fc_weights"], np.float64),
            fc_bias=_decode_array(doc["fc_bias"], np.float64),
            input_side=side,
        )
        net.check_shapes()
    elif doc["kind"] == "quantized":
        net = QuantizedNetwork(
            topology=topo,
            conv_weight_codes=[_decode_array(w, np.int64) for w in doc["conv_weight_codes"]],
            conv_bias_codes=[_decode_array(b, np.int64) for b in doc["conv_bias_codes"]],
            fc_weight_codes=_decode_array(doc["fc_weight_codes"], np.int64),
            fc_bias_codes=_decode_array(doc["fc_bias_codes"], np.int64),
            weight_formats=[FixedPointFormat(b, e) for b, e in doc["weight_formats"]],
            bias_formats=[FixedPointFormat(b, e) for b, e in doc["bias_formats"]],
            input_side=side,
        )
        net.check_codes()
    else:
        raise ValueError(f"unknown network kind {doc.get('kind')!r}")
    return net
