"""Command-line entry point: train, quantize, eval, explore, emit, throughput.

Exit codes: 0 success, 2 usage/config error, 3 runtime failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

try:
    import tomllib  # py311+
except ModuleNotFoundError:  # pragma: no cover - depends on interpreter
    import tomli as tomllib

from . import codegen, costmodel, explorer
from .dataflow import build_actor_graph, simulate_stream
from .dataset import load_idx, load_matrix_text, take
from .errors import FixcnnError
from .inference import (DatapathConfig, calibrate_datapath, datapath_from_doc,
                        datapath_to_doc, forward_reference)
from .model import FloatNetwork, QuantizedNetwork, Topology, network_from_json, network_to_json
from .quantizer import quantize
from .trainer import TrainConfig, train


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _usage(msg: str) -> CliError:
    return CliError(msg, 2)


def _runtime(msg: str) -> CliError:
    return CliError(msg, 3)


def _parse_topology(text: str) -> Topology:
    try:
        n1, n2, n3 = (int(v) for v in text.split(","))
        return Topology(n1, n2, n3)
    except (ValueError, TypeError) as e:
        raise _usage(f"bad --topology {text!r}: {e}") from None


def _load_dataset(images, labels, name="data") -> Dataset:
    for p in (images, labels):
        if not Path(p).exists():
            raise _usage(f"no such file: {p}")
    return load_idx(images, labels, name=name)


def _cmd_train(args) -> int:
    topo = _parse_topology(args.topology)
    data = _load_dataset(args.data[0], args.data[1], "train")
    cfg = TrainConfig(epochs=args.epochs, batch_size=args.batch_size,
                      learning_rate=args.lr, momentum=args.momentum, seed=args.seed)
    log_rows: list = []
    net = train(topo, data, cfg, log_rows=log_rows)
    Path(args.out).write_text(network_to_json(net) + "\n")
    log_path = args.log or str(args.out) + ".log.csv"
    with open(log_path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "loss", "train_acc"])
        for row in log_rows:
            w.writerow([row[0], f"{row[1]:.6f}", f"{row[2]:.6f}"])
    print(f"trained {topo.key()} on {len(data)} images -> {args.out}")
    return 0


def _cmd_quantize(args) -> int:
    if not 2 <= args.bits <= 16:
        raise _usage(f"--bits must be in [2, 16], got {args.bits}")
    if not Path(args.net).exists():
        raise _usage(f"no such file: {args.net}")
    net = network_from_json(Path(args.net).read_text())
    if not isinstance(net, FloatNetwork):
        raise _usage(f"{args.net} is not a float network")
    qnet = quantize(net, args.bits)
    doc = json.loads(network_to_json(qnet))
    if args.calib_data:
        calib = _load_dataset(args.calib_data[0], args.calib_data[1], "calib")
        sub = take(calib, min(args.calib_size, len(calib)), seed=0)
        dp = calibrate_datapath(net, sub.images, args.act_bits, args.acc_bits)
        doc["datapath"] = datapath_to_doc(dp)
    Path(args.out).write_text(json.dumps(doc, sort_keys=True, separators=(",", ":")) + "\n")
    print(f"quantized to B={args.bits} -> {args.out}")
    return 0


def _load_qnet(path) -> tuple[QuantizedNetwork, DatapathConfig | None]:
    if not Path(path).exists():
        raise _usage(f"no such file: {path}")
    text = Path(path).read_text()
    net = network_from_json(text)
    if not isinstance(net, QuantizedNetwork):
        raise _usage(f"{path} is not a quantized network")
    doc = json.loads(text)
    dp = datapath_from_doc(doc["datapath"]) if "datapath" in doc else None
    return net, dp


def _cmd_eval(args) -> int:
    qnet, dp = _load_qnet(args.qnet)
    data = _load_dataset(args.data[0], args.data[1], "eval")
    if len(data) == 0:
        raise _usage("empty evaluation dataset")
    if args.limit:
        data = take(data, min(args.limit, len(data)), seed=0)
    if dp is None:
        if not args.float_net:
            raise _usage("quantized network has no embedded datapath; pass --float-net")
        fnet = network_from_json(Path(args.float_net).read_text())
        if not isinstance(fnet, FloatNetwork):
            raise _usage(f"{args.float_net} is not a float network")
        calib = take(data, min(args.calib_size, len(data)), seed=0)
        dp = calibrate_datapath(fnet, calib.images)
    if args.backend == "reference":
        preds = forward_reference(qnet, dp, data.images)
    else:
        graph = build_actor_graph(qnet)
        preds = np.array([simulate_stream(graph, dp, data.images[i])
                          for i in range(len(data))])
    tpr = float(np.mean(preds == data.labels))
    if args.report:
        with open(args.report, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(["index", "label", "prediction"])
            for i, (lab, p) in enumerate(zip(data.labels, preds)):
                w.writerow([i, int(lab), int(p)])
    print(f"TPR {tpr:.4f} on {len(data)} images ({args.backend})")
    return 0


def _read_config(path) -> dict:
    if not Path(path).exists():
        raise _usage(f"no such config: {path}")
    try:
        with open(path, "rb") as f:
            return tomllib.load(f)
    except tomllib.TOMLDecodeError as e:
        raise _usage(f"bad config {path}: {e}") from None


def _cmd_explore(args) -> int:
    cfg = _read_config(args.config)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    dcfg = cfg.get("data", {})
    for key in ("train_images", "train_labels", "eval_images", "eval_labels"):
        if key not in dcfg:
            raise _usage(f"config missing data.{key}")
    train_data = _load_dataset(dcfg["train_images"], dcfg["train_labels"], "train")
    eval_data = _load_dataset(dcfg["eval_images"], dcfg["eval_labels"], "eval")
    seed = int(dcfg.get("seed", 0))
    if "train_size" in dcfg:
        train_data = take(train_data, int(dcfg["train_size"]), seed)
    if "eval_size" in dcfg:
        eval_data = take(eval_data, int(dcfg["eval_size"]), seed)
    secondary = None
    if "secondary_text" in dcfg:
        secondary = load_matrix_text(dcfg["secondary_text"],
                                     int(dcfg.get("secondary_side", 16)), "secondary")

    tcfg = cfg.get("train", {})
    train_cfg = TrainConfig(
        epochs=int(tcfg.get("epochs", 6)),
        batch_size=int(tcfg.get("batch_size", 64)),
        learning_rate=float(tcfg.get("learning_rate", 0.05)),
        momentum=float(tcfg.get("momentum", 0.9)),
        seed=int(tcfg.get("seed", 0)),
    )

    bcfg = cfg.get("boundaries", {})
    try:
        bounds = explorer.Boundaries(
            n1=tuple(bcfg.get("n1", (3, 5))),
            n2=tuple(bcfg.get("n2", (5, 10))),
            n3=tuple(bcfg.get("n3", (7, 14))),
            bits=tuple(bcfg.get("bits", (3, 4, 5, 6, 7))),
            step=int(bcfg.get("step", 2)),
        )
    except ValueError as e:
        raise _usage(f"bad boundaries: {e}") from None

    ccfg = cfg.get("cost", {})
    rows = costmodel.load_calibration(ccfg.get("calibration_csv"))
    params = costmodel.calibrate(rows)
    report = costmodel.fit_report(params, rows)
    with open(out / "costparams.json", "w") as f:
        json.dump(costmodel.params_to_doc(params, report), f, indent=2, sort_keys=True)
        f.write("\n")

    pcfg = cfg.get("datapath", {})
    ctx = explorer.ExplorationContext(
        train_data=train_data,
        eval_data=eval_data,
        secondary_data=secondary,
        train_cfg=train_cfg,
        cost_params=params,
        cost_mode=str(ccfg.get("mode", "empirical")),
        activation_bits=int(pcfg.get("activation_bits", 8)),
        accumulator_bits=int(pcfg.get("accumulator_bits", 32)),
        calib_size=int(pcfg.get("calib_size", 100)),
    )
    result = explorer.explore(bounds, ctx, workers=args.workers)

    explorer.write_records_csv(result.records, out / "records.csv")
    explorer.write_records_csv(result.records, out / "records_canonical.csv",
                               include_wall_time=False)
    explorer.write_summary_json(result.summary, out / "summary.json")
    explorer.write_records_csv(result.summary.pareto, out / "pareto.csv",
                               include_wall_time=False)
    explorer.write_per_bits_csv(result.summary.per_bits, out / "per_bits.csv")
    explorer.write_tdr_by_size_csv(result.records, out / "tdr_by_size.csv")

    print(f"explored {result.summary.points} points "
          f"({len(result.summary.failures)} failures) -> {out}")
    if result.summary.points == 0:
        print("design space is empty: zero points")
    if result.summary.failures:
        for point, err in result.summary.failures:
            print(f"  failed {point}: {err}", file=sys.stderr)
        return 3
    return 0


def _cmd_emit(args) -> int:
    qnet, _ = _load_qnet(args.qnet)
    graph = build_actor_graph(qnet, fuse_relu=not args.unfused)
    if args.format == "json":
        text = codegen.emit_netlist_json(graph, qnet)
    else:
        text = codegen.emit_dot(graph)
    Path(args.out).write_text(text)
    print(f"emitted {len(graph.actors)} actors -> {args.out}")
    return 0


def _cmd_throughput(args) -> int:
    try:
        w, h = (int(v) for v in args.resolution.lower().split("x"))
    except ValueError:
        raise _usage(f"bad --resolution {args.resolution!r}, want WxH") from None
    if args.clock_mhz <= 0 or w <= 0 or h <= 0:
        raise _usage("clock and resolution must be positive")
    print(costmodel.estimate_throughput(args.clock_mhz * 1e6, w, h))
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="fixcnn",
                                description="fixed-point CNN design-space toolchain")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train a float network on IDX data")
    t.add_argument("--topology", required=True, help="n1,n2,n3")
    t.add_argument("--data", nargs=2, required=True, metavar=("IMAGES", "LABELS"))
    t.add_argument("--out", required=True)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--epochs", type=int, default=6)
    t.add_argument("--batch-size", type=int, default=64)
    t.add_argument("--lr", type=float, default=0.05)
    t.add_argument("--momentum", type=float, default=0.9)
    t.add_argument("--log", help="training log CSV path")
    t.set_defaults(func=_cmd_train)

    q = sub.add_parser("quantize", help="quantize a float network to B bits")
    q.add_argument("--net", required=True)
    q.add_argument("--bits", type=int, required=True)
    q.add_argument("--out", required=True)
    q.add_argument("--calib-data", nargs=2, metavar=("IMAGES", "LABELS"),
                   help="embed a datapath calibrated on these images")
    q.add_argument("--calib-size", type=int, default=100)
    q.add_argument("--act-bits", type=int, default=8)
    q.add_argument("--acc-bits", type=int, default=32)
    q.set_defaults(func=_cmd_quantize)

    e = sub.add_parser("eval", help="measure fixed-point TPR")
    e.add_argument("--qnet", required=True)
    e.add_argument("--data", nargs=2, required=True, metavar=("IMAGES", "LABELS"))
    e.add_argument("--backend", choices=("reference", "stream"), default="reference")
    e.add_argument("--report", help="per-image prediction CSV")
    e.add_argument("--float-net", help="float network for datapath calibration")
    e.add_argument("--calib-size", type=int, default=100)
    e.add_argument("--limit", type=int, help="evaluate a deterministic N-image subset")
    e.set_defaults(func=_cmd_eval)

    x = sub.add_parser("explore", help="sweep the design space per a TOML config")
    x.add_argument("--config", required=True)
    x.add_argument("--out", required=True)
    x.add_argument("--workers", type=int, default=1)
    x.set_defaults(func=_cmd_explore)

    m = sub.add_parser("emit", help="emit the dataflow netlist")
    m.add_argument("--qnet", required=True)
    m.add_argument("--format", choices=("json", "dot"), required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--unfused", action="store_true",
                   help="materialize separate relu actors")
    m.set_defaults(func=_cmd_emit)

    th = sub.add_parser("throughput", help="classifications per second")
    th.add_argument("--clock-mhz", type=float, required=True)
    th.add_argument("--resolution", required=True, help="WxH, e.g. 256x256")
    th.set_defaults(func=_cmd_throughput)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as e:
        print(f"error: {e}", file=sys.stderr)
        return e.code
    except FixcnnError as e:
        print(f"error: {type(e).__name__}: {e}", file=sys.stderr)
        return 3
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
