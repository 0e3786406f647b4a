"""Mini-batch SGD training of the float network.

All math is float64 and single-threaded deterministic: the same
(topology, data, config) always produces bit-identical parameters.
Forward pass: conv(same) -> ReLU -> pool, twice, conv -> ReLU, then a
10-way inner product with softmax cross-entropy.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .dataset import Dataset
from .errors import TrainingError
from .model import FloatNetwork, Topology, fc_input_size


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 6
    batch_size: int = 64
    learning_rate: float = 0.05
    momentum: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ValueError("epochs and batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.momentum < 1:
            raise ValueError("momentum must be in [0, 1)")


def _im2col(x: np.ndarray) -> np.ndarray:
    """(n, c, h, w) -> (n*h*w, c*9) window matrix with zero padding."""
    n, c, h, w = x.shape
    p = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = sliding_window_view(p, (3, 3), axis=(2, 3))
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * h * w, c * 9)


def conv_same(x: np.ndarray, w: np.ndarray, b: np.ndarray | None = None) -> np.ndarray:
    """3x3 convolution with zero padding, keeping the spatial size."""
    n, _, h, wd = x.shape
    o = w.shape[0]
    out = _im2col(x) @ w.reshape(o, -1).T
    out = out.reshape(n, h, wd, o).transpose(0, 3, 1, 2)
    if b is not None:
        out = out + b[None, :, None, None]
    return out


def _conv_input_grad(dout: np.ndarray, w: np.ndarray) -> np.ndarray:
    # gradient of a same-conv wrt its input: same-conv of dout with the
    # spatially flipped, channel-transposed kernel
    wt = w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3)
    return conv_same(dout, np.ascontiguousarray(wt))


def _conv_weight_grad(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    n, c, h, wd = x.shape
    o = dout.shape[1]
    cols = _im2col(x)  # (n*h*w, c*9)
    dflat = dout.transpose(0, 2, 3, 1).reshape(n * h * wd, o)
    return (dflat.T @ cols).reshape(o, c, 3, 3)


def maxpool2(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2 stride-2 max pool with floor on odd sizes; also returns argmax."""
    n, c, h, w = x.shape
    h2, w2 = h // 2, w // 2
    blocks = x[:, :, : h2 * 2, : w2 * 2].reshape(n, c, h2, 2, w2, 2)
    blocks = blocks.transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h2, w2, 4)
    idx = blocks.argmax(axis=-1)
    out = np.take_along_axis(blocks, idx[..., None], axis=-1)[..., 0]
    return out, idx


def _maxpool2_grad(dout: np.ndarray, idx: np.ndarray, in_shape) -> np.ndarray:
    n, c, h, w = in_shape
    h2, w2 = h // 2, w // 2
    dblocks = np.zeros((n, c, h2, w2, 4))
    np.put_along_axis(dblocks, idx[..., None], dout[..., None], axis=-1)
    dblocks = dblocks.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
    dx = np.zeros(in_shape)
    dx[:, :, : h2 * 2, : w2 * 2] = dblocks.reshape(n, c, h2 * 2, w2 * 2)
    return dx


def forward_trace(net: FloatNetwork, x: np.ndarray) -> dict:
    """Forward pass keeping every intermediate needed for backprop."""
    t: dict = {"x0": x}
    t["z1"] = conv_same(x, net.conv_weights[0], net.conv_biases[0])
    t["a1"] = np.maximum(t["z1"], 0.0)
    t["p1"], t["i1"] = maxpool2(t["a1"])
    t["z2"] = conv_same(t["p1"], net.conv_weights[1], net.conv_biases[1])
    t["a2"] = np.maximum(t["z2"], 0.0)
    t["p2"], t["i2"] = maxpool2(t["a2"])
    t["z3"] = conv_same(t["p2"], net.conv_weights[2], net.conv_biases[2])
    t["a3"] = np.maximum(t["z3"], 0.0)
    t["flat"] = t["a3"].reshape(x.shape[0], -1)
    t["logits"] = t["flat"] @ net.fc_weights.T + net.fc_bias
    return t


def float_logits(net: FloatNetwork, images: np.ndarray) -> np.ndarray:
    return forward_trace(net, images)["logits"]


def predict_float(net: FloatNetwork, images: np.ndarray) -> np.ndarray:
    return np.argmax(float_logits(net, images), axis=1)


def float_accuracy(net: FloatNetwork, data: Dataset) -> float:
    return float(np.mean(predict_float(net, data.images) == data.labels))


def _log_softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=1, keepdims=True))


@dataclass
class Gradients:
    conv_w: list[np.ndarray]
    conv_b: list[np.ndarray]
    fc_w: np.ndarray
    fc_b: np.ndarray

    def flat(self) -> list[np.ndarray]:
        return [*self.conv_w, *self.conv_b, self.fc_w, self.fc_b]


def _as_arrays(batch) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(batch, Dataset):
        return batch.images, batch.labels
    if isinstance(batch, tuple) and len(batch) == 2:
        return batch
    items = list(batch)
    images = np.stack([it.pixels for it in items])
    labels = np.array([it.label for it in items], dtype=np.int64)
    return images, labels


def loss_and_gradients(net: FloatNetwork, batch) -> tuple[float, Gradients]:
    """Mean cross-entropy over the batch and gradients for every parameter."""
    images, labels = _as_arrays(batch)
    if len(labels) == 0:
        raise ValueError("empty batch")
    n = len(labels)
    t = forward_trace(net, images)
    logp = _log_softmax(t["logits"])
    loss = float(-logp[np.arange(n), labels].mean())

    dlogits = np.exp(logp)
    dlogits[np.arange(n), labels] -= 1.0
    dlogits /= n

    dfc_w = dlogits.T @ t["flat"]
    dfc_b = dlogits.sum(axis=0)
    da3 = (dlogits @ net.fc_weights).reshape(t["a3"].shape)

    dz3 = da3 * (t["z3"] > 0)
    dw3 = _conv_weight_grad(t["p2"], dz3)
    db3 = dz3.sum(axis=(0, 2, 3))
    dp2 = _conv_input_grad(dz3, net.conv_weights[2])

    da2 = _maxpool2_grad(dp2, t["i2"], t["a2"].shape)
    dz2 = da2 * (t["z2"] > 0)
    dw2 = _conv_weight_grad(t["p1"], dz2)
    db2 = dz2.sum(axis=(0, 2, 3))
    dp1 = _conv_input_grad(dz2, net.conv_weights[1])

    da1 = _maxpool2_grad(dp1, t["i1"], t["a1"].shape)
    dz1 = da1 * (t["z1"] > 0)
    dw1 = _conv_weight_grad(t["x0"], dz1)
    db1 = dz1.sum(axis=(0, 2, 3))

    return loss, Gradients([dw1, dw2, dw3], [db1, db2, db3], dfc_w, dfc_b)


def _xavier(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def init_network(topology: Topology, seed: int, input_side: int = 28) -> FloatNetwork:
    """Xavier-uniform weights, zero biases; deterministic in the seed."""
    rng = np.random.default_rng(seed)
    conv_w, conv_b = [], []
    for cin, cout in topology.conv_pairs():
        conv_w.append(_xavier(rng, (cout, cin, 3, 3), cin * 9, cout * 9))
        conv_b.append(np.zeros(cout))
    fc_in = fc_input_size(topology, input_side)
    fc_w = _xavier(rng, (10, fc_in), fc_in, 10)
    net = FloatNetwork(topology, conv_w, conv_b, fc_w, np.zeros(10), input_side)
    net.check_shapes()
    return net


def train(
    topology: Topology,
    data: Dataset,
    cfg: TrainConfig,
    log_rows: list | None = None,
) -> FloatNetwork:
    """Momentum SGD over shuffled mini-batches; deterministic given the seed."""
    if len(data) == 0:
        raise ValueError("empty training set")
    net = init_network(topology, cfg.seed, data.side)
    params = net.parameters()
    velocity = [np.zeros_like(p) for p in params]
    rng = np.random.default_rng(cfg.seed)
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(len(data))
        losses = []
        for start in range(0, len(data), cfg.batch_size):
            sel = order[start : start + cfg.batch_size]
            loss, grads = loss_and_gradients(net, (data.images[sel], data.labels[sel]))
            if not np.isfinite(loss):
                raise TrainingError(f"loss diverged at epoch {epoch}", epoch=epoch)
            losses.append(loss)
            for p, v, g in zip(params, velocity, grads.flat()):
                v *= cfg.momentum
                v -= cfg.learning_rate * g
                p += v
        if log_rows is not None:
            log_rows.append((epoch, float(np.mean(losses)), float_accuracy(net, data)))
    net.check_shapes()
    return net
