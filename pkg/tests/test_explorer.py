import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fixcnn.explorer import (Boundaries, EvaluationRecord, count_topologies, design_points,
                             enumerate_topologies, evaluate_point, explore, hill_climb,
                             holistic_gap_report, neighbors, pareto_front, tdr)
from fixcnn.model import Topology


def _fake_record(t: Topology, bits: int, tpr=None, dsp=None) -> EvaluationRecord:
    # deterministic synthetic point: bigger nets score higher and cost more
    size = t.n1 + t.n2 + t.n3
    tpr = tpr if tpr is not None else min(1.0, 0.5 + 0.01 * size + 0.05 * bits)
    dsp = dsp if dsp is not None else 10 + 3 * size + bits * bits
    return EvaluationRecord(t.n1, t.n2, t.n3, bits, tpr, None, dsp,
                            tdr(100 * tpr, dsp), tpr, 0.0)


def test_default_boundaries_enumerate_76_topologies():
    b = Boundaries()
    topos = enumerate_topologies(b)
    assert len(topos) == 76
    assert count_topologies(b) == 76
    assert len(design_points(b)) == 380


def test_singleton_space():
    b = Boundaries(n1=(3, 3), n2=(5, 5), n3=(7, 7), bits=(3,), step=2)
    assert [t.key() for t in enumerate_topologies(b)] == [(3, 5, 7)]


def test_four_point_space_by_hand():
    b = Boundaries(n1=(3, 4), n2=(5, 6), n3=(7, 8), bits=(3,), step=2)
    assert {t.key() for t in enumerate_topologies(b)} == {
        (3, 5, 7), (3, 5, 8), (3, 6, 8), (4, 6, 8)}


def test_enumeration_is_lexicographic():
    keys = [t.key() for t in enumerate_topologies(Boundaries())]
    assert keys == sorted(keys)


@settings(max_examples=20)
@given(st.integers(1, 6), st.integers(0, 4), st.integers(1, 8), st.integers(0, 6),
       st.integers(1, 10), st.integers(0, 8), st.integers(1, 3))
def test_count_formula_matches_brute_force(a, da, b_, db, c, dc, step):
    b = Boundaries(n1=(a, a + da), n2=(b_, b_ + db), n3=(c, c + dc),
                   bits=(3,), step=step)
    assert count_topologies(b) == len(enumerate_topologies(b))


def test_tdr_table_values():
    assert tdr(64.8, 161) == pytest.approx(0.402484, abs=1e-6)
    assert tdr(73.0, 245) == pytest.approx(0.297959, abs=1e-6)
    assert tdr(0.0, 5) == 0.0


def test_tdr_rejects_bad_arguments():
    with pytest.raises(ValueError):
        tdr(50.0, 0)
    with pytest.raises(ValueError):
        tdr(101.0, 10)
    with pytest.raises(ValueError):
        tdr(-1.0, 10)


def test_tdr_argmax_invariant_under_positive_scaling():
    b = Boundaries(n1=(3, 4), n2=(5, 6), n3=(7, 8), bits=(3, 5, 7), step=2)
    recs = [_fake_record(t, bits) for t, bits in design_points(b)]
    best = max(recs, key=lambda r: r.tdr)
    scaled = [EvaluationRecord(r.n1, r.n2, r.n3, r.bits, r.tpr_primary, None, r.dsp,
                               r.tdr * 0.37, r.float_tpr, 0.0) for r in recs]
    assert max(scaled, key=lambda r: r.tdr).key() == best.key()


def test_pareto_front_exhaustive_domination():
    b = Boundaries(n1=(3, 4), n2=(5, 6), n3=(7, 8), bits=(3, 5, 7), step=2)
    recs = [_fake_record(t, bits) for t, bits in design_points(b)]
    front = pareto_front(recs)
    front_keys = {r.key() for r in front}
    for r in recs:
        dominated = any(
            o.tpr_primary >= r.tpr_primary and o.dsp <= r.dsp
            and (o.tpr_primary > r.tpr_primary or o.dsp < r.dsp) for o in recs)
        assert (r.key() not in front_keys) == dominated


def test_pareto_single_dominating_point():
    t = Topology(3, 5, 7)
    good = _fake_record(t, 3, tpr=0.9, dsp=10)
    worse = [_fake_record(t, 5, tpr=0.5, dsp=20), _fake_record(t, 7, tpr=0.4, dsp=30)]
    assert [r.key() for r in pareto_front([good, *worse])] == [good.key()]


def test_explore_with_stub_evaluator_and_worker_independence():
    b = Boundaries(n1=(3, 4), n2=(5, 6), n3=(7, 8), bits=(3, 5, 7), step=2)
    evaluate = lambda t, bits: _fake_record(t, bits)
    r1 = explore(b, ctx=None, workers=1, evaluate=evaluate)
    r8 = explore(b, ctx=None, workers=8, evaluate=evaluate)
    assert len(r1.records) == 12
    assert [r.canonical() for r in r1.records] == [r.canonical() for r in r8.records]
    exhaustive_best = max(r1.records, key=lambda r: r.tdr)
    assert r1.summary.best_tdr.key() == exhaustive_best.key()
    assert r8.summary.best_tdr.key() == exhaustive_best.key()
    assert r1.summary.min_dsp.dsp == min(r.dsp for r in r1.records)
    assert r1.summary.best_tpr.tpr_primary == max(r.tpr_primary for r in r1.records)


def test_explore_records_failures_and_continues():
    b = Boundaries(n1=(3, 4), n2=(5, 6), n3=(7, 8), bits=(3,), step=2)

    def evaluate(t, bits):
        if t.key() == (3, 6, 8):
            raise RuntimeError("synthetic point failure")
        return _fake_record(t, bits)

    res = explore(b, ctx=None, workers=2, evaluate=evaluate)
    assert len(res.records) == 3
    assert len(res.summary.failures) == 1
    assert res.summary.failures[0][0] == (3, 6, 8, 3)
    assert "synthetic point failure" in res.summary.failures[0][1]


def test_explore_empty_space():
    b = Boundaries(n1=(5, 5), n2=(5, 5), n3=(5, 5), bits=(3,), step=2)
    res = explore(b, ctx=None, evaluate=lambda t, bits: _fake_record(t, bits))
    assert res.records == [] and res.summary.points == 0


def test_per_bits_stats_match_numpy():
    b = Boundaries(n1=(3, 4), n2=(5, 6), n3=(7, 8), bits=(3, 5), step=2)
    res = explore(b, ctx=None, evaluate=lambda t, bits: _fake_record(t, bits))
    for s in res.summary.per_bits:
        sub = [r for r in res.records if r.bits == s.bits]
        assert s.count == len(sub)
        assert s.tpr_mean == pytest.approx(np.mean([r.tpr_primary for r in sub]))
        assert s.dsp_std == pytest.approx(np.std([r.dsp for r in sub]))


def test_neighbors_respect_gap_and_bounds():
    b = Boundaries(n1=(3, 5), n2=(5, 10), n3=(7, 14), bits=(3, 4, 5, 6, 7), step=2)
    moves = neighbors(Topology(3, 5, 7), 3, b)
    keys = {(t.key(), bits) for t, bits in moves}
    assert ((3, 5, 8), 3) in keys
    assert ((3, 6, 8), 3) not in keys  # only one coordinate moves at a time
    assert ((4, 5, 7), 3) not in keys  # would break n2 >= n1 + step
    assert ((3, 5, 7), 4) in keys
    assert all(bits != 2 for _, bits in moves)


def test_hill_climb_fixed_point_at_global_max():
    b = Boundaries(n1=(3, 4), n2=(5, 6), n3=(7, 8), bits=(3, 5, 7), step=2)
    evaluate = lambda t, bits: _fake_record(t, bits)
    res = explore(b, ctx=None, evaluate=evaluate)
    best = max(res.records, key=lambda r: r.tdr)
    rec, trace = hill_climb((Topology(best.n1, best.n2, best.n3), best.bits), b,
                            ctx=None, evaluate=evaluate)
    assert rec.key() == best.key()
    assert len(trace) == 1


def test_hill_climb_never_decreases_and_bounds_evaluations():
    b = Boundaries(n1=(3, 4), n2=(5, 6), n3=(7, 8), bits=(3, 5, 7), step=2)
    evaluated = {}

    def evaluate(t, bits):
        evaluated[(t.key(), bits)] = True
        return _fake_record(t, bits)

    points = design_points(b)
    for t, bits in points:
        start_rec = _fake_record(t, bits)
        rec, trace = hill_climb((t, bits), b, ctx=None, evaluate=evaluate)
        assert rec.tdr >= start_rec.tdr
        assert trace[0].key() == start_rec.key()
    assert len(evaluated) <= len(points)


def test_hill_climb_rejects_start_outside_boundaries():
    b = Boundaries(n1=(3, 4), n2=(5, 6), n3=(7, 8), bits=(3,), step=2)
    with pytest.raises(ValueError):
        hill_climb((Topology(5, 7, 9), 3), b, ctx=None, evaluate=lambda t, bits: None)


def test_gap_report_loss_formula():
    t = Topology(3, 5, 7)
    records = [_fake_record(t, 5, tpr=0.73, dsp=245),   # tdr 0.2980
               _fake_record(t, 7, tpr=0.732, dsp=428)]  # tdr 0.1710
    gap = holistic_gap_report(records)
    assert gap.tdr_loss_pct == pytest.approx(42.617, abs=0.05)
    assert gap.best_at_max_bits == (3, 5, 7, 7)


def test_gap_report_single_bits_is_spread_only():
    records = [_fake_record(Topology(3, 5, 7), 5, tpr=0.70, dsp=100),
               _fake_record(Topology(3, 5, 8), 5, tpr=0.77, dsp=120)]
    gap = holistic_gap_report(records)
    assert gap.tdr_loss_pct is None
    assert gap.tpr_spread_pct == pytest.approx(7.0)


def test_gap_report_identical_tdr_zero_loss():
    records = [_fake_record(Topology(3, 5, 7), 3, tpr=0.5, dsp=100),
               _fake_record(Topology(3, 5, 7), 7, tpr=0.5, dsp=100)]
    gap = holistic_gap_report(records)
    assert gap.tdr_loss_pct == 0.0


def test_gap_report_needs_two_records():
    with pytest.raises(ValueError):
        holistic_gap_report([_fake_record(Topology(3, 5, 7), 3)])


def test_evaluate_point_record_is_deterministic(trained_357, train_small, eval_small,
                                                cost_params):
    from fixcnn.explorer import ExplorationContext
    from fixcnn.trainer import TrainConfig
    ctx = ExplorationContext(train_data=train_small, eval_data=eval_small,
                             train_cfg=TrainConfig(epochs=1, seed=0),
                             cost_params=cost_params)
    a = evaluate_point(Topology(3, 5, 7), 5, ctx)
    b = evaluate_point(Topology(3, 5, 7), 5, ctx)
    assert a.canonical() == b.canonical()
    assert a.tdr == pytest.approx(100 * a.tpr_primary / a.dsp)


def test_wide_bits_point_tracks_float_accuracy(train_small, eval_small):
    from fixcnn.costmodel import calibrate, load_calibration
    from fixcnn.explorer import ExplorationContext
    from fixcnn.trainer import TrainConfig
    params16 = calibrate(load_calibration(), bit_range=(3, 16))
    ctx = ExplorationContext(train_data=train_small, eval_data=eval_small,
                             train_cfg=TrainConfig(epochs=1, seed=0),
                             cost_params=params16, accumulator_bits=48)
    rec = evaluate_point(Topology(3, 5, 7), 16, ctx)
    assert abs(rec.tpr_primary - rec.float_tpr) <= 0.01
