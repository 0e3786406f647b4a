"""DSP-block cost estimation, calibration against synthesis reports, throughput.

The model assumes fully parallel constant-coefficient multipliers, one per
kernel tap per connection, with strength reduction: taps whose code is 0 or
+-2^k cost nothing (wires/shifts), and the remaining generic multipliers
pack p(B) to a DSP block. A fixed overhead term absorbs the inner-product
stage and control. p(B) per bit-width and the overhead are fitted to
vendor synthesis reports shipped in data/dsp_calibration.csv.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from importlib import resources

import numpy as np

from .errors import CalibrationError
from .model import QuantizedNetwork, Topology
from .quantizer import count_generic

CALIBRATION_RESOURCE = "data/dsp_calibration.csv"


@dataclass(frozen=True)
class CalibrationRow:
    n1: int
    n2: int
    n3: int
    bits: int
    dsp: int

    @property
    def topology(self) -> Topology:
        return Topology(self.n1, self.n2, self.n3)


def load_calibration(path=None) -> list[CalibrationRow]:
    """Published (topology, B, DSP) synthesis points; shipped, never recomputed."""
    if path is None:
        text = resources.files("fixcnn").joinpath(CALIBRATION_RESOURCE).read_text()
    else:
        with open(path) as f:
            text = f.read()
    rows = []
    for rec in csv.DictReader(text.splitlines()):
        rows.append(CalibrationRow(int(rec["n1"]), int(rec["n2"]), int(rec["n3"]),
                                   int(rec["bits"]), int(rec["dsp"])))
    return rows


@dataclass(frozen=True)
class CostParams:
    """Fitted packing factors p(B) (generic multipliers per DSP) and overhead."""

    packing: dict[int, float]
    overhead: float

    def __post_init__(self):
        if self.overhead < 0:
            raise CalibrationError("negative overhead")
        last = None
        for b in sorted(self.packing):
            p = self.packing[b]
            if p <= 0:
                raise CalibrationError(f"non-positive packing factor p({b}) = {p}")
            if last is not None and p > last + 1e-12:
                raise CalibrationError("packing factors must be non-increasing in B")
            last = p

    def packing_for(self, bits: int) -> float:
        try:
            return self.packing[bits]
        except KeyError:
            raise CalibrationError(f"no packing factor calibrated for B = {bits}") from None


def mac_count(topology: Topology) -> int:
    """Kernel taps across all conv connections, one multiplier each."""
    c = topology.channels
    return 9 * (c[0] * c[1] + c[1] * c[2] + c[2] * c[3])


def generic_fraction(bits: int) -> float:
    """Expected generic share under uniform codes: 0 and the +-2^k pairs are free."""
    return (2 ** bits - (2 * bits - 1)) / 2 ** bits


def generic_multipliers(net: QuantizedNetwork) -> int:
    """Conv kernel taps whose code survives strength reduction."""
    return sum(count_generic(w) for w in net.conv_weight_codes)


def estimate_dsp(
    params: CostParams,
    *,
    net: QuantizedNetwork | None = None,
    topology: Topology | None = None,
    bits: int | None = None,
    mode: str = "analytic",
) -> int:
    """DSP blocks for a design point.

    empirical mode counts the actual generic weight codes of `net`;
    analytic mode expects (topology, bits) and assumes uniform codes.
    """
    if mode == "empirical":
        if net is None:
            raise ValueError("empirical mode requires a quantized network")
        count: float = generic_multipliers(net)
        b = net.bits
    elif mode == "analytic":
        if net is not None:
            topology, bits = net.topology, net.bits
        if topology is None or bits is None:
            raise ValueError("analytic mode requires topology and bits")
        count = mac_count(topology) * generic_fraction(bits)
        b = bits
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return int(math.ceil(count / params.packing_for(b))) + round(params.overhead)


def _analytic_load(row: CalibrationRow) -> float:
    return mac_count(row.topology) * generic_fraction(row.bits)


def _isotonic_nondecreasing(values: list[float], weights: list[float]) -> list[float]:
    """Weighted pool-adjacent-violators fit, non-decreasing."""
    blocks: list[list[float]] = []  # [mean, weight, count]
    for v, w in zip(values, weights):
        blocks.append([v, w, 1])
        while len(blocks) > 1 and blocks[-2][0] > blocks[-1][0]:
            v1, w1, c1 = blocks.pop()
            v0, w0, c0 = blocks.pop()
            blocks.append([(v0 * w0 + v1 * w1) / (w0 + w1), w0 + w1, c0 + c1])
    out: list[float] = []
    for v, _, c in blocks:
        out.extend([v] * c)
    return out


def calibrate(rows: list[CalibrationRow], bit_range: tuple[int, int] = (3, 7)) -> CostParams:
    """Least-squares fit of per-B packing and one overhead, on relative error.

    For a candidate overhead h the squared relative error is quadratic in
    1/p(B) per bit-width, so the constrained optimum (p non-increasing in
    B) is a weighted isotonic regression of the per-B closed forms; h is
    swept over an integer grid. Bit-widths absent from the data are filled
    by log-linear interpolation.
    """
    if not rows:
        raise CalibrationError("empty calibration set")
    by_bits: dict[int, list[CalibrationRow]] = {}
    for r in rows:
        by_bits.setdefault(r.bits, []).append(r)
    bits_fitted = sorted(by_bits)
    loads = {b: np.array([_analytic_load(r) / r.dsp for r in by_bits[b]]) for b in bits_fitted}

    def fit_for_overhead(h: float):
        free, weights = [], []
        for b in bits_fitted:
            a = loads[b]
            y = np.array([(r.dsp - h) / r.dsp for r in by_bits[b]])
            free.append(float(a @ y) / float(a @ a))
            weights.append(float(a @ a))
        # p non-increasing in B means 1/p non-decreasing
        q = _isotonic_nondecreasing(free, weights)
        if min(q) <= 0:
            return None, math.inf
        sse = 0.0
        for b, qb in zip(bits_fitted, q):
            a = loads[b]
            y = np.array([(r.dsp - h) / r.dsp for r in by_bits[b]])
            sse += float(((a * qb - y) ** 2).sum())
        return dict(zip(bits_fitted, q)), sse

    best_h, best_q, best_sse = None, None, math.inf
    for h in range(0, min(r.dsp for r in rows)):
        q, sse = fit_for_overhead(float(h))
        if q is not None and sse < best_sse:
            best_h, best_q, best_sse = h, q, sse
    if best_q is None:
        raise CalibrationError("degenerate fit: no overhead yields positive packing")

    packing = {b: 1.0 / q for b, q in best_q.items()}
    lo, hi = bit_range
    fitted = sorted(packing)
    for b in range(lo, hi + 1):
        if b in packing:
            continue
        below = [x for x in fitted if x < b]
        above = [x for x in fitted if x > b]
        if below and above:
            b0, b1 = below[-1], above[0]
            t = (b - b0) / (b1 - b0)
            packing[b] = 2.0 ** ((1 - t) * math.log2(packing[b0]) + t * math.log2(packing[b1]))
        else:
            packing[b] = packing[below[-1]] if below else packing[above[0]]
    return CostParams(packing=packing, overhead=float(best_h))


@dataclass(frozen=True)
class FitReport:
    rows: list[CalibrationRow]
    estimates: list[int]
    relative_errors: list[float]
    mean_abs_relative_error: float


def fit_report(params: CostParams, rows: list[CalibrationRow]) -> FitReport:
    est, rel = [], []
    for r in rows:
        e = estimate_dsp(params, topology=r.topology, bits=r.bits, mode="analytic")
        est.append(e)
        rel.append((e - r.dsp) / r.dsp)
    mean_abs = float(np.mean(np.abs(rel))) if rel else 0.0
    return FitReport(rows, est, rel, mean_abs)


def estimate_throughput(clock_hz: float, width: int, height: int) -> int:
    """Classifications per second of the fully pipelined stream: one pixel per tick."""
    if clock_hz <= 0 or width <= 0 or height <= 0:
        raise ValueError("clock and resolution must be positive")
    return int(clock_hz // (width * height))


def params_to_doc(params: CostParams, report: FitReport | None = None) -> dict:
    doc: dict = {
        "packing": {str(b): params.packing[b] for b in sorted(params.packing)},
        "overhead": params.overhead,
    }
    if report is not None:
        doc["fit"] = {
            "rows": [[r.n1, r.n2, r.n3, r.bits, r.dsp] for r in report.rows],
            "estimates": report.estimates,
            "relative_errors": report.relative_errors,
            "mean_abs_relative_error": report.mean_abs_relative_error,
        }
    return doc


def params_from_doc(doc: dict) -> CostParams:
    return CostParams(
        packing={int(b): float(p) for b, p in doc["packing"].items()},
        overhead=float(doc["overhead"]),
    )
