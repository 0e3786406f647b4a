"""Bounded design-space exploration over topology and bit width.

Each point (N1, N2, N3, B) is evaluated by quantizing a float network
trained once per topology, measuring fixed-point accuracy, estimating DSP
cost and ranking by TDR = accuracy-percent per DSP block. Also provides
greedy hill climbing over the point neighborhood and the Pareto front of
(accuracy up, DSP down).
"""
from __future__ import annotations

import csv
import json
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .costmodel import CostParams, estimate_dsp
from .dataset import Dataset, take
from .inference import DatapathConfig, calibrate_datapath, evaluate_tpr
from .model import FloatNetwork, Topology
from .quantizer import quantize
from .trainer import TrainConfig, float_accuracy, train


@dataclass(frozen=True)
class Boundaries:
    """Explored ranges; defaults are the reference OCR design space."""

    n1: tuple[int, int] = (3, 5)
    n2: tuple[int, int] = (5, 10)
    n3: tuple[int, int] = (7, 14)
    bits: tuple[int, ...] = (3, 4, 5, 6, 7)
    step: int = 2

    def __post_init__(self):
        for lo, hi in (self.n1, self.n2, self.n3):
            if lo > hi:
                raise ValueError(f"empty range [{lo}, {hi}]")
        if self.step < 1:
            raise ValueError("step must be >= 1")
        if not self.bits or list(self.bits) != sorted(set(self.bits)):
            raise ValueError("bits must be distinct and ascending")


def enumerate_topologies(b: Boundaries) -> list[Topology]:
    """Lexicographic (n1, n2, n3) with each layer at least `step` wider."""
    out = []
    for n1 in range(b.n1[0], b.n1[1] + 1):
        for n2 in range(n1 + b.step, b.n2[1] + 1):
            for n3 in range(n2 + b.step, b.n3[1] + 1):
                out.append(Topology(n1, n2, n3))
    return out


def count_topologies(b: Boundaries) -> int:
    """Closed-form size of enumerate_topologies, no materialization."""
    total = 0
    for n1 in range(b.n1[0], b.n1[1] + 1):
        for n2 in range(n1 + b.step, b.n2[1] + 1):
            total += max(0, b.n3[1] - (n2 + b.step) + 1)
    return total


def design_points(b: Boundaries) -> list[tuple[Topology, int]]:
    return [(t, bits) for t in enumerate_topologies(b) for bits in b.bits]


def tdr(tpr_percent: float, dsp: int) -> float:
    """Accuracy percent contributed per DSP block."""
    if dsp < 1:
        raise ValueError(f"dsp must be >= 1, got {dsp}")
    if not 0.0 <= tpr_percent <= 100.0:
        raise ValueError(f"tpr_percent outside [0, 100]: {tpr_percent}")
    return tpr_percent / dsp


@dataclass(frozen=True)
class EvaluationRecord:
    n1: int
    n2: int
    n3: int
    bits: int
    tpr_primary: float
    tpr_secondary: float | None
    dsp: int
    tdr: float
    float_tpr: float
    wall_time: float

    def key(self) -> tuple[int, int, int, int]:
        return (self.n1, self.n2, self.n3, self.bits)

    def canonical(self) -> tuple:
        """Every field except the (non-deterministic) wall time."""
        return (self.n1, self.n2, self.n3, self.bits, self.tpr_primary,
                self.tpr_secondary, self.dsp, self.tdr, self.float_tpr)


@dataclass
class ExplorationContext:
    """Datasets, configs and caches shared by all point evaluations."""

    train_data: Dataset
    eval_data: Dataset
    train_cfg: TrainConfig
    cost_params: CostParams
    secondary_data: Dataset | None = None
    cost_mode: str = "empirical"
    activation_bits: int = 8
    accumulator_bits: int = 32
    calib_size: int = 100
    _cache: dict = field(default_factory=dict)
    _locks: dict = field(default_factory=dict)
    _guard: threading.Lock = field(default_factory=threading.Lock)

    def trained(self, topology: Topology) -> tuple[FloatNetwork, DatapathConfig, float]:
        """Float network, datapath and float accuracy, trained once per topology."""
        key = (topology.key(), self.train_cfg.seed)
        with self._guard:
            lock = self._locks.setdefault(key, threading.Lock())
        with lock:
            if key not in self._cache:
                net = train(topology, self.train_data, self.train_cfg)
                calib = take(self.train_data, min(self.calib_size, len(self.train_data)),
                             seed=self.train_cfg.seed).images
                dp = calibrate_datapath(net, calib, self.activation_bits,
                                        self.accumulator_bits)
                self._cache[key] = (net, dp, float_accuracy(net, self.eval_data))
            return self._cache[key]


def evaluate_point(topology: Topology, bits: int, ctx: ExplorationContext) -> EvaluationRecord:
    """Quantize at B, measure fixed-point TPR, estimate DSP, compute TDR."""
    t0 = time.perf_counter()
    net, dp, float_tpr = ctx.trained(topology)
    qnet = quantize(net, bits)
    tpr = evaluate_tpr(qnet, dp, ctx.eval_data)
    tpr2 = (evaluate_tpr(qnet, dp, ctx.secondary_data)
            if ctx.secondary_data is not None and len(ctx.secondary_data) else None)
    dsp = estimate_dsp(ctx.cost_params, net=qnet, topology=topology, bits=bits,
                       mode=ctx.cost_mode)
    return EvaluationRecord(
        n1=topology.n1, n2=topology.n2, n3=topology.n3, bits=bits,
        tpr_primary=tpr, tpr_secondary=tpr2, dsp=dsp,
        tdr=tdr(100.0 * tpr, dsp), float_tpr=float_tpr,
        wall_time=time.perf_counter() - t0,
    )


def pareto_front(records: list[EvaluationRecord]) -> list[EvaluationRecord]:
    """Records not dominated in (tpr_primary max, dsp min)."""
    front = []
    for r in records:
        dominated = False
        for o in records:
            if (o.tpr_primary >= r.tpr_primary and o.dsp <= r.dsp
                    and (o.tpr_primary > r.tpr_primary or o.dsp < r.dsp)):
                dominated = True
                break
        if not dominated:
            front.append(r)
    return sorted(front, key=lambda r: r.key())


@dataclass
class PerBitStats:
    bits: int
    count: int
    tpr_mean: float
    tpr_std: float
    dsp_mean: float
    dsp_std: float
    tdr_mean: float
    tdr_std: float


@dataclass
class GapReport:
    """Cost of partial exploration relative to the joint sweep."""

    tdr_loss_pct: float | None  # best TDR at max B only vs global best
    tpr_spread_pct: float  # widest accuracy gap between same-B topologies
    global_best: tuple
    best_at_max_bits: tuple | None


def holistic_gap_report(records: list[EvaluationRecord]) -> GapReport:
    if len(records) < 2:
        raise ValueError("gap report needs at least 2 records")
    best = max(records, key=lambda r: (r.tdr, r.key()))
    all_bits = sorted({r.bits for r in records})
    loss = None
    best_bmax = None
    if len(all_bits) > 1:
        bmax = all_bits[-1]
        best_bmax = max((r for r in records if r.bits == bmax),
                        key=lambda r: (r.tdr, r.key()))
        loss = 100.0 * (best.tdr - best_bmax.tdr) / best.tdr if best.tdr > 0 else 0.0
    spread = 0.0
    for b in all_bits:
        sub = [r.tpr_primary for r in records if r.bits == b]
        if len(sub) > 1:
            spread = max(spread, 100.0 * (max(sub) - min(sub)))
    return GapReport(
        tdr_loss_pct=loss,
        tpr_spread_pct=spread,
        global_best=best.key(),
        best_at_max_bits=best_bmax.key() if best_bmax else None,
    )


@dataclass
class ExploreSummary:
    points: int
    best_tdr: EvaluationRecord | None
    best_tpr: EvaluationRecord | None
    min_dsp: EvaluationRecord | None
    per_bits: list[PerBitStats]
    pareto: list[EvaluationRecord]
    gap: GapReport | None
    failures: list[tuple[tuple, str]]


@dataclass
class ExploreResult:
    records: list[EvaluationRecord]
    summary: ExploreSummary


def summarize(records: list[EvaluationRecord],
              failures: list[tuple[tuple, str]] | None = None) -> ExploreSummary:
    failures = failures or []
    if not records:
        return ExploreSummary(0, None, None, None, [], [], None, failures)
    per_bits = []
    for b in sorted({r.bits for r in records}):
        sub = [r for r in records if r.bits == b]
        tprs = np.array([r.tpr_primary for r in sub])
        dsps = np.array([r.dsp for r in sub], dtype=float)
        tdrs = np.array([r.tdr for r in sub])
        per_bits.append(PerBitStats(
            bits=b, count=len(sub),
            tpr_mean=float(tprs.mean()), tpr_std=float(tprs.std()),
            dsp_mean=float(dsps.mean()), dsp_std=float(dsps.std()),
            tdr_mean=float(tdrs.mean()), tdr_std=float(tdrs.std()),
        ))
    return ExploreSummary(
        points=len(records),
        best_tdr=max(records, key=lambda r: (r.tdr, r.key())),
        best_tpr=max(records, key=lambda r: (r.tpr_primary, r.key())),
        min_dsp=min(records, key=lambda r: (r.dsp, r.key())),
        per_bits=per_bits,
        pareto=pareto_front(records),
        gap=holistic_gap_report(records) if len(records) >= 2 else None,
        failures=failures,
    )


def explore(b: Boundaries, ctx: ExplorationContext, workers: int = 1,
            evaluate=None) -> ExploreResult:
    """Evaluate every design point; failures are recorded, not fatal."""
    evaluate = evaluate or (lambda t, bits: evaluate_point(t, bits, ctx))
    points = design_points(b)
    records: dict[tuple, EvaluationRecord] = {}
    failures: list[tuple[tuple, str]] = []
    if workers <= 1:
        results = [(p, _call(evaluate, p)) for p in points]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            futs = [(p, pool.submit(evaluate, p[0], p[1])) for p in points]
            results = []
            for p, f in futs:
                try:
                    results.append((p, (f.result(), None)))
                except Exception as e:  # noqa: BLE001 - point failures are data
                    results.append((p, (None, f"{type(e).__name__}: {e}")))
    for (t, bits), (rec, err) in results:
        if err is None and rec is not None:
            records[(t.key(), bits)] = rec
        else:
            failures.append(((*t.key(), bits), err or "unknown"))
    ordered = [records[(t.key(), bits)] for t, bits in points if (t.key(), bits) in records]
    return ExploreResult(records=ordered, summary=summarize(ordered, failures))


def _call(evaluate, point):
    try:
        return (evaluate(point[0], point[1]), None)
    except Exception as e:  # noqa: BLE001
        return (None, f"{type(e).__name__}: {e}")


def neighbors(t: Topology, bits: int, b: Boundaries) -> list[tuple[Topology, int]]:
    """Valid +-1 moves in each of n1, n2, n3 and one bit-width position."""
    out = []
    for dn1, dn2, dn3 in ((1, 0, 0), (-1, 0, 0), (0, 1, 0), (0, -1, 0),
                          (0, 0, 1), (0, 0, -1)):
        n1, n2, n3 = t.n1 + dn1, t.n2 + dn2, t.n3 + dn3
        if (b.n1[0] <= n1 <= b.n1[1] and n2 <= b.n2[1] and n3 <= b.n3[1]
                and n2 >= n1 + b.step and n3 >= n2 + b.step):
            out.append((Topology(n1, n2, n3), bits))
    pos = b.bits.index(bits)
    if pos > 0:
        out.append((t, b.bits[pos - 1]))
    if pos < len(b.bits) - 1:
        out.append((t, b.bits[pos + 1]))
    return out


def hill_climb(start: tuple[Topology, int], b: Boundaries, ctx: ExplorationContext,
               evaluate=None) -> tuple[EvaluationRecord, list[EvaluationRecord]]:
    """Greedy best-neighbor ascent on TDR; returns the local max and the path."""
    t, bits = start
    if (t, bits) not in [(p, v) for p, v in design_points(b)]:
        raise ValueError(f"start {t.key()} B={bits} outside boundaries")
    evaluate = evaluate or (lambda tt, bb: evaluate_point(tt, bb, ctx))
    memo: dict[tuple, EvaluationRecord] = {}

    def ev(tt: Topology, bb: int) -> EvaluationRecord:
        k = (tt.key(), bb)
        if k not in memo:
            memo[k] = evaluate(tt, bb)
        return memo[k]

    current = ev(t, bits)
    trace = [current]
    while True:
        cands = [ev(tt, bb) for tt, bb in neighbors(t, bits, b)]
        best = max(cands, key=lambda r: (r.tdr, r.key()), default=None)
        if best is None or best.tdr <= current.tdr:
            return current, trace
        current = best
        t, bits = Topology(best.n1, best.n2, best.n3), best.bits
        trace.append(current)


# ---------------------------------------------------------------- reporting

RECORD_FIELDS = ["n1", "n2", "n3", "bits", "tpr_primary", "tpr_secondary",
                 "dsp", "tdr", "float_tpr", "wall_time"]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


def write_records_csv(records: list[EvaluationRecord], path,
                      include_wall_time: bool = True) -> None:
    fields = RECORD_FIELDS if include_wall_time else RECORD_FIELDS[:-1]
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(fields)
        for r in sorted(records, key=lambda r: r.key()):
            row = [r.n1, r.n2, r.n3, r.bits, r.tpr_primary, r.tpr_secondary,
                   r.dsp, r.tdr, r.float_tpr, r.wall_time]
            w.writerow([_fmt(v) for v in (row if include_wall_time else row[:-1])])


def write_per_bits_csv(stats: list[PerBitStats], path) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["bits", "count", "tpr_mean", "tpr_std", "dsp_mean", "dsp_std",
                    "tdr_mean", "tdr_std"])
        for s in stats:
            w.writerow([s.bits, s.count] + [_fmt(v) for v in
                       (s.tpr_mean, s.tpr_std, s.dsp_mean, s.dsp_std, s.tdr_mean, s.tdr_std)])


def write_tdr_by_size_csv(records: list[EvaluationRecord], path) -> None:
    """Plot data: TDR against total neuron count, per bit width."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["neurons", "bits", "n1", "n2", "n3", "tdr"])
        for r in sorted(records, key=lambda r: (r.n1 + r.n2 + r.n3, r.key())):
            w.writerow([r.n1 + r.n2 + r.n3, r.bits, r.n1, r.n2, r.n3, _fmt(r.tdr)])


def _record_doc(r: EvaluationRecord | None) -> dict | None:
    if r is None:
        return None
    return {k: getattr(r, k) for k in RECORD_FIELDS}


def summary_to_doc(s: ExploreSummary) -> dict:
    return {
        "points": s.points,
        "best_tdr": _record_doc(s.best_tdr),
        "best_tpr": _record_doc(s.best_tpr),
        "min_dsp": _record_doc(s.min_dsp),
        "per_bits": [vars(p) for p in s.per_bits],
        "pareto_size": len(s.pareto),
        "gap": vars(s.gap) if s.gap else None,
        "failures": [{"point": list(p), "error": e} for p, e in s.failures],
    }


def write_summary_json(s: ExploreSummary, path) -> None:
    with open(path, "w") as f:
        json.dump(summary_to_doc(s), f, indent=2, sort_keys=True)
        f.write("\n")
