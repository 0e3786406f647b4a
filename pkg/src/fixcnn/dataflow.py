"""Streaming dataflow backend: actor graph construction and token simulation.

The network is unrolled into per-channel actors exchanging integer tokens
over bounded FIFO channels: one conv actor per (layer, out, in) connection
with a two-row line buffer, a per-neuron sum actor joining the input
channels and adding the bias, horizontal/vertical pooling actor pairs per
channel, one inner-product actor and one argmax actor. By default the
ReLU/requantize step is fused into the sum actor; build with
fuse_relu=False to materialize separate relu actors.

Firing is data-driven (a token batch is processed whenever inputs are
available and output space exists), so any sweep policy yields the same
streams; the simulation must agree bit-for-bit with the tensor reference.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import SimulationError
from .inference import DatapathConfig, align_bias, quantize_input, requantize_relu
from .model import QuantizedNetwork

INPUT = "input"
OUTPUT = "output"

CONV, SUM, RELU, POOLH, POOLV, FC, ARGMAX = (
    "conv", "sum", "relu", "poolH", "poolV", "fc", "argmax",
)


@dataclass(frozen=True)
class Actor:
    id: str
    kind: str
    params: dict


@dataclass(frozen=True)
class Channel:
    src: str
    src_port: int
    dst: str
    dst_port: int
    capacity: int


@dataclass
class ActorGraph:
    header: dict
    actors: list[Actor]
    channels: list[Channel]

    def actor(self, actor_id: str) -> Actor:
        for a in self.actors:
            if a.id == actor_id:
                return a
        raise KeyError(actor_id)

    def kind_counts(self) -> dict[str, int]:
        counts: dict[str, int] = {}
        for a in self.actors:
            counts[a.kind] = counts.get(a.kind, 0) + 1
        return counts


def build_actor_graph(
    net: QuantizedNetwork, image_width: int | None = None, fuse_relu: bool = True
) -> ActorGraph:
    """Unroll a quantized network into its dataflow actor graph."""
    side = net.input_side if image_width is None else image_width
    t = net.topology
    actors: list[Actor] = []
    channels: list[Channel] = []

    def link(src, dst, dst_port, width):
        channels.append(Channel(src, 0, dst, dst_port, capacity=2 * width))

    stage_side = side
    in_channels = [INPUT]  # producer ids of the current per-channel streams
    counts = t.channels
    for l in range(3):
        n_in, n_out = counts[l], counts[l + 1]
        lb = 2 * stage_side
        post = []
        for j in range(n_out):
            sum_id = f"sum{l + 1}_{j}"
            for i in range(n_in):
                conv_id = f"conv{l + 1}_{j}_{i}"
                actors.append(Actor(conv_id, CONV, {
                    "layer": l + 1, "out_ch": j, "in_ch": i,
                    "height": stage_side, "width": stage_side,
                    "kernel": net.conv_weight_codes[l][j, i].tolist(),
                    "line_buffer_depth": lb,
                }))
                link(in_channels[i], conv_id, 0, stage_side)
                link(conv_id, sum_id, i, stage_side)
            actors.append(Actor(sum_id, SUM, {
                "layer": l + 1, "ch": j, "n_inputs": n_in,
                "bias_code": int(net.conv_bias_codes[l][j]),
                "activation": "relu" if fuse_relu else "none",
            }))
            tail = sum_id
            if not fuse_relu:
                relu_id = f"relu{l + 1}_{j}"
                actors.append(Actor(relu_id, RELU, {"layer": l + 1, "ch": j}))
                link(sum_id, relu_id, 0, stage_side)
                tail = relu_id
            post.append(tail)
        if l < 2:
            pooled = []
            half = stage_side // 2
            for j in range(n_out):
                ph, pv = f"poolh{l + 1}_{j}", f"poolv{l + 1}_{j}"
                actors.append(Actor(ph, POOLH, {
                    "layer": l + 1, "ch": j, "height": stage_side, "width": stage_side,
                }))
                actors.append(Actor(pv, POOLV, {
                    "layer": l + 1, "ch": j, "height": stage_side, "width": half,
                }))
                link(post[j], ph, 0, stage_side)
                link(ph, pv, 0, half)
                pooled.append(pv)
            in_channels = pooled
            stage_side = half
        else:
            in_channels = post

    map_side = stage_side
    actors.append(Actor(FC, FC, {
        "channels": t.n3, "map_side": map_side,
        "weight_codes": net.fc_weight_codes.tolist(),
        "bias_codes": net.fc_bias_codes.tolist(),
    }))
    for c, producer in enumerate(in_channels):
        link(producer, FC, c, map_side)
    actors.append(Actor(ARGMAX, ARGMAX, {"classes": 10}))
    # class-accumulator and decision channels are narrower than any stage
    channels.append(Channel(FC, 0, ARGMAX, 0, capacity=10))
    channels.append(Channel(ARGMAX, 0, OUTPUT, 0, capacity=2))

    header = {
        "topology": {"n1": t.n1, "n2": t.n2, "n3": t.n3},
        "bits": net.bits,
        "input_side": side,
        "fused_relu": fuse_relu,
        "weight_formats": [[f.bits, f.exponent] for f in net.weight_formats],
        "bias_formats": [[f.bits, f.exponent] for f in net.bias_formats],
    }
    return ActorGraph(header, actors, channels)


class Fifo:
    """Bounded FIFO of int64 tokens stored as array chunks."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.chunks: deque[np.ndarray] = deque()
        self.size = 0
        self.pushed = 0

    @property
    def space(self) -> int:
        return self.capacity - self.size

    def push(self, arr: np.ndarray) -> None:
        if len(arr) > self.space:
            raise SimulationError(f"FIFO overflow: {len(arr)} > {self.space}")
        if len(arr):
            self.chunks.append(np.asarray(arr, dtype=np.int64))
            self.size += len(arr)
            self.pushed += len(arr)

    def pop(self, n: int) -> np.ndarray:
        if n > self.size:
            raise SimulationError(f"FIFO underflow: {n} > {self.size}")
        out = np.empty(n, dtype=np.int64)
        got = 0
        while got < n:
            head = self.chunks[0]
            k = min(n - got, len(head))
            out[got : got + k] = head[:k]
            if k == len(head):
                self.chunks.popleft()
            else:
                self.chunks[0] = head[k:]
            got += k
        self.size -= n
        return out


class _ConvState:
    def __init__(self, actor: Actor, fin: Fifo, fouts: list[Fifo]):
        p = actor.params
        self.h, self.w = p["height"], p["width"]
        self.kernel = np.asarray(p["kernel"], dtype=np.int64)
        self.fin, self.fouts = fin, fouts
        self.frame = np.zeros((self.h + 2, self.w + 2), dtype=np.int64)  # zero border
        self.received = 0
        self.emitted_rows = 0

    def fire(self) -> bool:
        progressed = False
        n = self.fin.size
        if n:
            tokens = self.fin.pop(n)
            idx = np.arange(self.received, self.received + n)
            self.frame[idx // self.w + 1, idx % self.w + 1] = tokens
            self.received += n
            progressed = True
        full_rows = self.received // self.w
        ready = self.h if self.received == self.h * self.w else max(0, full_rows - 1)
        while self.emitted_rows < ready and all(f.space >= self.w for f in self.fouts):
            y = self.emitted_rows
            seg = self.frame[y : y + 3, :]  # rows y-1..y+1 in unpadded coords
            win = sliding_window_view(seg, 3, axis=1)  # (3, w, 3)
            row = np.einsum("iwj,ij->w", win, self.kernel)
            for f in self.fouts:
                f.push(row)
            self.emitted_rows += 1
            progressed = True
        return progressed


class _SumState:
    def __init__(self, actor: Actor, fins: list[Fifo], fouts: list[Fifo],
                 bias_aligned: int, requant: tuple | None):
        self.fins, self.fouts = fins, fouts
        self.bias = bias_aligned
        self.requant = requant  # (acc_exp, out_exp, act_max) when fused

    def fire(self) -> bool:
        n = min(f.size for f in self.fins)
        n = min([n] + [f.space for f in self.fouts])
        if n <= 0:
            return False
        acc = self.fins[0].pop(n).copy()
        for f in self.fins[1:]:
            acc += f.pop(n)
        acc += self.bias
        if self.requant is not None:
            acc_exp, out_exp, act_max = self.requant
            acc = requantize_relu(acc, acc_exp, out_exp, act_max)
        for f in self.fouts:
            f.push(acc)
        return True


class _ReluState:
    def __init__(self, fin: Fifo, fouts: list[Fifo], requant: tuple):
        self.fin, self.fouts = fin, fouts
        self.requant = requant

    def fire(self) -> bool:
        n = min([self.fin.size] + [f.space for f in self.fouts])
        if n <= 0:
            return False
        acc_exp, out_exp, act_max = self.requant
        out = requantize_relu(self.fin.pop(n), acc_exp, out_exp, act_max)
        for f in self.fouts:
            f.push(out)
        return True


class _PoolHState:
    def __init__(self, actor: Actor, fin: Fifo, fouts: list[Fifo]):
        self.w = actor.params["width"]
        self.fin, self.fouts = fin, fouts
        self.buf = np.empty(0, dtype=np.int64)

    def fire(self) -> bool:
        progressed = False
        if self.fin.size:
            self.buf = np.concatenate([self.buf, self.fin.pop(self.fin.size)])
            progressed = True
        half = self.w // 2
        while len(self.buf) >= self.w and all(f.space >= half for f in self.fouts):
            row, self.buf = self.buf[: self.w], self.buf[self.w :]
            pairs = row[: half * 2].reshape(half, 2).max(axis=1)  # odd tail dropped
            for f in self.fouts:
                f.push(pairs)
            progressed = True
        return progressed


class _PoolVState:
    def __init__(self, actor: Actor, fin: Fifo, fouts: list[Fifo]):
        self.w = actor.params["width"]  # width after horizontal pooling
        self.h = actor.params["height"]
        self.fin, self.fouts = fin, fouts
        self.buf = np.empty(0, dtype=np.int64)
        self.rows_in = 0

    def fire(self) -> bool:
        progressed = False
        if self.fin.size:
            self.buf = np.concatenate([self.buf, self.fin.pop(self.fin.size)])
            progressed = True
        while len(self.buf) >= 2 * self.w and all(f.space >= self.w for f in self.fouts):
            top, bottom = self.buf[: self.w], self.buf[self.w : 2 * self.w]
            self.buf = self.buf[2 * self.w :]
            self.rows_in += 2
            for f in self.fouts:
                f.push(np.maximum(top, bottom))
            progressed = True
        # odd trailing row of the frame is dropped, just drain it
        if self.h % 2 == 1 and self.rows_in == self.h - 1 and len(self.buf) >= self.w:
            self.buf = self.buf[self.w :]
            self.rows_in += 1
            progressed = True
        return progressed


class _FcState:
    def __init__(self, actor: Actor, fins: list[Fifo], fout: Fifo, bias_aligned: np.ndarray):
        p = actor.params
        self.weights = np.asarray(p["weight_codes"], dtype=np.int64)
        self.map_len = p["map_side"] ** 2
        self.fins, self.fout = fins, fout
        self.acc = bias_aligned.astype(np.int64).copy()
        self.consumed = [0] * len(fins)
        self.done = False

    def fire(self) -> bool:
        progressed = False
        for c, f in enumerate(self.fins):
            n = min(f.size, self.map_len - self.consumed[c])
            if n <= 0:
                continue
            tokens = f.pop(n)
            base = c * self.map_len + self.consumed[c]
            self.acc += tokens @ self.weights[:, base : base + n].T
            self.consumed[c] += n
            progressed = True
        if not self.done and all(k == self.map_len for k in self.consumed):
            if self.fout.space >= len(self.acc):
                self.fout.push(self.acc)
                self.done = True
                progressed = True
        return progressed


class _ArgmaxState:
    def __init__(self, actor: Actor, fin: Fifo, fout: Fifo):
        self.classes = actor.params["classes"]
        self.fin, self.fout = fin, fout

    def fire(self) -> bool:
        if self.fin.size >= self.classes and self.fout.space >= 1:
            scores = self.fin.pop(self.classes)
            self.fout.push(np.array([int(np.argmax(scores))]))
            return True
        return False


def _build_runtime(graph: ActorGraph, dp: DatapathConfig):
    fifos = [Fifo(c.capacity) for c in graph.channels]
    inputs: dict[str, list[tuple[int, Fifo]]] = {}
    outputs: dict[str, list[Fifo]] = {}
    in_fifos: list[Fifo] = []
    out_fifo = None
    for fifo, ch in zip(fifos, graph.channels):
        if ch.src == INPUT:
            in_fifos.append(fifo)
        else:
            outputs.setdefault(ch.src, []).append(fifo)
        if ch.dst == OUTPUT:
            out_fifo = fifo
        else:
            inputs.setdefault(ch.dst, []).append((ch.dst_port, fifo))
    if out_fifo is None:
        raise SimulationError("graph has no output channel")

    wf = graph.header["weight_formats"]
    bf = graph.header["bias_formats"]
    exps = dp.act_exponents
    acc_exp = [wf[l][1] + exps[l] for l in range(3)]

    states = {}
    for a in graph.actors:
        fins = [f for _, f in sorted(inputs.get(a.id, []), key=lambda t: t[0])]
        fouts = outputs.get(a.id, [])
        if a.kind == CONV:
            states[a.id] = _ConvState(a, fins[0], fouts)
        elif a.kind == SUM:
            l = a.params["layer"] - 1
            bias = int(align_bias(np.array([a.params["bias_code"]]), bf[l][1], acc_exp[l])[0])
            requant = None
            if a.params["activation"] == "relu":
                requant = (acc_exp[l], exps[l + 1], dp.act_max)
            states[a.id] = _SumState(a, fins, fouts, bias, requant)
        elif a.kind == RELU:
            l = a.params["layer"] - 1
            states[a.id] = _ReluState(fins[0], fouts, (acc_exp[l], exps[l + 1], dp.act_max))
        elif a.kind == POOLH:
            states[a.id] = _PoolHState(a, fins[0], fouts)
        elif a.kind == POOLV:
            states[a.id] = _PoolVState(a, fins[0], fouts)
        elif a.kind == FC:
            fc_acc_exp = wf[3][1] + exps[3]
            bias = align_bias(np.asarray(a.params["bias_codes"]), bf[3][1], fc_acc_exp)
            states[a.id] = _FcState(a, fins, fouts[0], bias)
        elif a.kind == ARGMAX:
            states[a.id] = _ArgmaxState(a, fins[0], fouts[0])
        else:
            raise SimulationError(f"unknown actor kind {a.kind}")
    return states, in_fifos, out_fifo


def simulate_stream(
    graph: ActorGraph,
    dp: DatapathConfig,
    image: np.ndarray,
    policy: str = "roundrobin",
    seed: int = 0,
    stats: dict | None = None,
) -> int:
    """Run one image through the actor graph; returns the predicted class."""
    if image.ndim == 2:
        image = image[None]
    tokens = quantize_input(image[None], dp)[0, 0].reshape(-1)
    states, in_fifos, out_fifo = _build_runtime(graph, dp)
    cursors = [0] * len(in_fifos)

    order = list(states.keys())
    if policy == "reversed":
        order = order[::-1]
    rng = np.random.default_rng(seed) if policy == "random" else None
    if policy not in ("roundrobin", "reversed", "random"):
        raise ValueError(f"unknown policy {policy!r}")

    sweeps = 0
    while True:
        progressed = False
        for i, f in enumerate(in_fifos):
            n = min(f.space, len(tokens) - cursors[i])
            if n > 0:
                f.push(tokens[cursors[i] : cursors[i] + n])
                cursors[i] += n
                progressed = True
        if rng is not None:
            order = [order[k] for k in rng.permutation(len(order))]
        for actor_id in order:
            if states[actor_id].fire():
                progressed = True
        sweeps += 1
        if out_fifo.size >= 1:
            break
        if not progressed:
            blocked = [a for a, s in states.items() if getattr(s, "fin", None) and s.fin.size]
            raise SimulationError(f"deadlock after {sweeps} sweeps; blocked: {blocked[:8]}")
    if stats is not None:
        stats["sweeps"] = sweeps
        stats["input_tokens"] = [f.pushed for f in in_fifos]
    return int(out_fifo.pop(1)[0])
