"""Netlist emission: machine-readable JSON and human-readable DOT.

The JSON document is self-contained (actors with their parameters,
channels with capacities, formats in the header) and reloads to an
identical ActorGraph, so emit -> parse -> emit is byte-stable.
"""
from __future__ import annotations

import json

import numpy as np

from .dataflow import INPUT, OUTPUT, Actor, ActorGraph, Channel, build_actor_graph
from .errors import ConsistencyError
from .model import QuantizedNetwork

NETLIST_SCHEMA_VERSION = 1


def _check_consistency(graph: ActorGraph, net: QuantizedNetwork) -> None:
    h = graph.header
    t = net.topology
    if (h["topology"]["n1"], h["topology"]["n2"], h["topology"]["n3"]) != t.key():
        raise ConsistencyError(f"graph topology {h['topology']} != network {t.key()}")
    if h["bits"] != net.bits:
        raise ConsistencyError(f"graph bits {h['bits']} != network bits {net.bits}")
    for a in graph.actors:
        if a.kind == "conv":
            l, j, i = a.params["layer"] - 1, a.params["out_ch"], a.params["in_ch"]
            if not np.array_equal(np.asarray(a.params["kernel"]),
                                  net.conv_weight_codes[l][j, i]):
                raise ConsistencyError(f"kernel mismatch at {a.id}")
        elif a.kind == "fc":
            if not np.array_equal(np.asarray(a.params["weight_codes"]),
                                  net.fc_weight_codes):
                raise ConsistencyError("fc weight mismatch")


def emit_netlist_json(graph: ActorGraph, net: QuantizedNetwork) -> str:
    """Serialize the actor graph, validating it against the network first."""
    _check_consistency(graph, net)
    doc = {
        "schema_version": NETLIST_SCHEMA_VERSION,
        "header": graph.header,
        "actors": [{"id": a.id, "kind": a.kind, "params": a.params}
                   for a in graph.actors],
        "channels": [{"src": c.src, "src_port": c.src_port, "dst": c.dst,
                      "dst_port": c.dst_port, "capacity": c.capacity}
                     for c in graph.channels],
    }
    return json.dumps(doc, sort_keys=True, indent=1) + "\n"


def load_netlist_json(text: str) -> ActorGraph:
    doc = json.loads(text)
    if doc.get("schema_version") != NETLIST_SCHEMA_VERSION:
        raise ConsistencyError(f"unsupported netlist schema {doc.get('schema_version')}")
    return ActorGraph(
        header=doc["header"],
        actors=[Actor(a["id"], a["kind"], a["params"]) for a in doc["actors"]],
        channels=[Channel(c["src"], c["src_port"], c["dst"], c["dst_port"], c["capacity"])
                  for c in doc["channels"]],
    )


def emit_dot(graph: ActorGraph) -> str:
    """GraphViz digraph: one node per actor, plus stream anchors if used."""
    lines = ["digraph netlist {", "  rankdir=LR;"]
    if any(c.src == INPUT for c in graph.channels):
        lines.append(f'  "{INPUT}" [shape=plaintext label="{INPUT}"];')
    for a in graph.actors:
        lines.append(f'  "{a.id}" [label="{a.kind}/{a.id}"];')
    if any(c.dst == OUTPUT for c in graph.channels):
        lines.append(f'  "{OUTPUT}" [shape=plaintext label="{OUTPUT}"];')
    for c in graph.channels:
        lines.append(f'  "{c.src}" -> "{c.dst}" [label="{c.capacity}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def netlist_for(net: QuantizedNetwork, fuse_relu: bool = True) -> tuple[ActorGraph, str]:
    """Convenience: build the graph and emit its JSON document."""
    graph = build_actor_graph(net, fuse_relu=fuse_relu)
    return graph, emit_netlist_json(graph, net)
