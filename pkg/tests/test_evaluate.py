import math
import random

import numpy as np
import pytest

from oracles import greedy_oracle, pointwise_formulas
from plotextract.evaluate import (
    PlotReport,
    PointwiseReport,
    Ranges,
    aggregate,
    classification_metrics,
    combined_ranges,
    evaluate_plot,
    interpolation_metrics,
    match_points,
    pair_series,
    pointwise_metrics,
)
from plotextract.model import AxisSpec, ExtractionOutcome, PlotData, Point, Series, Status


def pts(*xy):
    return [Point(float(x), float(y)) for x, y in xy]


def plot(*series):
    return PlotData(AxisSpec("x"), AxisSpec("y"), tuple(series))


# -- combined_ranges ---------------------------------------------------------


def test_ranges_cover_union():
    r = combined_ranges(pts((0, 1), (10, 2)), pts((2, 0), (12, 3)))
    assert (r.x_min, r.x_max, r.y_min, r.y_max) == (0, 12, 0, 3)


def test_ranges_identical_sets():
    a = pts((1, 4), (3, 9))
    r = combined_ranges(a, a)
    assert (r.x_min, r.x_max, r.y_min, r.y_max) == (1, 3, 4, 9)


def test_degenerate_range_uses_unit_denominator():
    r = combined_ranges(pts((0, 5), (1, 5)), pts((0.5, 5)))
    assert r.y_min == r.y_max == 5
    assert r.y_span == 1.0
    assert r.x_span == 1.0


def test_ranges_reject_empty():
    with pytest.raises(ValueError):
        combined_ranges([], pts((0, 0)))


# -- match_points ------------------------------------------------------------


def test_identity_matching():
    a = pts((0, 0), (1, 1))
    m = match_points(a, a, combined_ranges(a, a))
    assert len(m.pairs) == 2
    assert all(o == e for o, e in m.pairs)
    assert m.unmatched_truth == () and m.unmatched_extracted == ()


def test_nearest_points_matched_one_truth_left():
    truth = pts((0, 0), (1, 1), (2, 2))
    ext = pts((0.01, 0), (1, 1.01))
    m = match_points(truth, ext, combined_ranges(truth, ext))
    oracle_pairs, left_t, _ = greedy_oracle([(p.x, p.y) for p in truth], [(p.x, p.y) for p in ext])
    assert sorted(oracle_pairs) == [(0, 0), (1, 1)]
    assert set(m.pairs) == {(truth[0], ext[0]), (truth[1], ext[1])}
    assert m.unmatched_truth == (Point(2, 2),)
    assert left_t == [2]


def test_early_stop_after_first_match():
    truth = pts((0, 0), (1, 0))
    ext = pts((5, 0), (6, 0))
    m = match_points(truth, ext, combined_ranges(truth, ext))
    # oracle walk: closest pair is (1,0)-(5,0); leftovers {(0,0)} and {(6,0)} are x-disjoint
    oracle_pairs, left_t, left_e = greedy_oracle([(0, 0), (1, 0)], [(5, 0), (6, 0)])
    assert oracle_pairs == [(1, 0)] and left_t == [0] and left_e == [1]
    assert m.pairs == ((Point(1, 0), Point(5, 0)),)
    assert m.unmatched_truth == (Point(0, 0),)
    assert m.unmatched_extracted == (Point(6, 0),)


def test_empty_side_yields_no_pairs():
    m = match_points([], pts((0, 0)), Ranges(0, 1, 0, 1))
    assert m.pairs == () and m.unmatched_extracted == (Point(0, 0),)


def _random_instance(rng, max_n=8, grid=False):
    n, k = rng.randint(1, max_n), rng.randint(1, max_n)
    if grid:
        draw = lambda: (float(rng.randint(0, 4)), float(rng.randint(0, 4)))
    else:
        draw = lambda: (rng.uniform(-5, 5), rng.uniform(-5, 5))
    return [draw() for _ in range(n)], [draw() for _ in range(k)]


@pytest.mark.parametrize("grid", [False, True])
def test_greedy_oracle_equivalence(grid):
    rng = random.Random(1234 + grid)
    for _ in range(300):
        t, e = _random_instance(rng, grid=grid)
        truth, ext = pts(*t), pts(*e)
        m = match_points(truth, ext, combined_ranges(truth, ext))
        o_pairs, o_lt, o_le = greedy_oracle(t, e)
        assert m.pairs == tuple((truth[i], ext[j]) for i, j in o_pairs)
        assert m.unmatched_truth == tuple(truth[i] for i in sorted(o_lt))
        assert m.unmatched_extracted == tuple(ext[j] for j in sorted(o_le))


def test_partition_consistency():
    rng = random.Random(7)
    for _ in range(200):
        t, e = _random_instance(rng)
        truth, ext = pts(*t), pts(*e)
        r = pointwise_metrics(match_points(truth, ext, combined_ranges(truth, ext)))
        assert r.n_matched + r.n_unmatched_truth == len(truth)
        assert r.n_matched + r.n_unmatched_extracted == len(ext)
        assert 0 <= r.precision <= 1 and 0 <= r.recall <= 1


def test_swap_symmetry_when_stop_rule_silent():
    rng = random.Random(99)
    checked = 0
    for _ in range(400):
        t, e = _random_instance(rng)
        truth, ext = pts(*t), pts(*e)
        fwd = match_points(truth, ext, combined_ranges(truth, ext))
        bwd = match_points(ext, truth, combined_ranges(ext, truth))
        shorter = min(len(truth), len(ext))
        if len(fwd.pairs) < shorter or len(bwd.pairs) < shorter:
            continue
        checked += 1
        assert {(o, e) for o, e in fwd.pairs} == {(o, e) for e, o in bwd.pairs}
        rf, rb = pointwise_metrics(fwd), pointwise_metrics(bwd)
        assert rf.precision == rb.recall and rf.recall == rb.precision
    assert checked > 100


def test_affine_invariance():
    rng = random.Random(5)
    for _ in range(200):
        t, e = _random_instance(rng)
        ax, bx = rng.uniform(0.01, 100), rng.uniform(-1e3, 1e3)
        ay, by = rng.uniform(0.01, 100), rng.uniform(-1e3, 1e3)
        f = lambda p: (ax * p[0] + bx, ay * p[1] + by)
        base = pointwise_metrics(match_points(pts(*t), pts(*e), combined_ranges(pts(*t), pts(*e))))
        tt, ee = pts(*map(f, t)), pts(*map(f, e))
        moved = pointwise_metrics(match_points(tt, ee, combined_ranges(tt, ee)))
        assert moved.n_matched == base.n_matched
        assert moved.precision == pytest.approx(base.precision, abs=1e-9)
        assert moved.recall == pytest.approx(base.recall, abs=1e-9)
        assert moved.mae_x == pytest.approx(base.mae_x, abs=1e-9)
        assert moved.mae_y == pytest.approx(base.mae_y, abs=1e-9)


# -- pointwise_metrics -------------------------------------------------------


def test_identity_metrics():
    a = pts((0, 0), (1, 3), (2, 1))
    r = pointwise_metrics(match_points(a, a, combined_ranges(a, a)))
    assert (r.mae_x, r.mae_y, r.precision, r.recall) == (0, 0, 1, 1)


def test_mae_x_two_percent():
    # x errors 0.1 and 0.3 over an x-range of 10
    truth = pts((0, 0), (10, 0))
    ext = pts((0.1, 0), (9.7, 0))
    m = match_points(truth, ext, Ranges(0, 10, 0, 0))
    r = pointwise_metrics(m)
    assert r.mae_x == pytest.approx((0.1 + 0.3) / 2 / 10, abs=1e-15)
    assert r.mae_x == pytest.approx(0.02, abs=1e-12)


def test_precision_recall_counts():
    truth = pts((0, 0), (1, 0), (2, 0), (3, 0))
    ext = pts((0, 0), (1, 0), (1.5, 5))
    from plotextract.evaluate import Matching

    m = Matching(
        pairs=((truth[0], ext[0]), (truth[1], ext[1])),
        unmatched_truth=(truth[2], truth[3]),
        unmatched_extracted=(ext[2],),
        ranges=combined_ranges(truth, ext),
    )
    r = pointwise_metrics(m)
    assert r.precision == pytest.approx(2 / 3)
    assert r.recall == pytest.approx(2 / 4)


def test_no_pairs_leaves_mae_undefined():
    from plotextract.evaluate import Matching

    r = pointwise_metrics(Matching((), (Point(0, 0),), (Point(1, 1),), Ranges(0, 1, 0, 1)))
    assert r.mae_x is None and r.mae_y is None
    assert r.precision == 0 and r.recall == 0


def test_metrics_match_formulas_random():
    rng = random.Random(11)
    for _ in range(200):
        t, e = _random_instance(rng)
        truth, ext = pts(*t), pts(*e)
        r = pointwise_metrics(match_points(truth, ext, combined_ranges(truth, ext)))
        o_pairs, _, _ = greedy_oracle(t, e)
        mx, my, prec, rec = pointwise_formulas(t, e, o_pairs)
        assert abs(r.mae_x - mx) <= 1e-12 and abs(r.mae_y - my) <= 1e-12
        assert abs(r.precision - prec) <= 1e-12 and abs(r.recall - rec) <= 1e-12


# -- interpolation_metrics ---------------------------------------------------


def test_interp_identity_zero():
    s = Series.from_xy("a", [(0, 1), (0.3, -2), (1, 4), (2.5, 0)])
    r = interpolation_metrics(s, s)
    assert r.mae_y == 0.0 and r.mae_dx == 0.0
    assert r.left_miss == 0 and r.right_miss == 0


def test_interp_constant_offset():
    truth = Series.from_xy("t", [(0, 0), (0.5, 0.5), (1, 1)])
    ext = Series.from_xy("e", [(0, 0.1), (0.5, 0.6), (1, 1.1)])
    r = interpolation_metrics(truth, ext)
    assert r.mae_y_raw == pytest.approx(0.1, abs=1e-12)
    assert abs(r.mae_y - 0.10) <= 1e-9
    assert r.mae_dx == 0


def test_interp_end_misses():
    truth = Series.from_xy("t", [(x, 2 * x) for x in range(11)])
    ext = Series.from_xy("e", [(x, 2 * x) for x in range(1, 10)])
    r = interpolation_metrics(truth, ext)
    assert (r.left_miss, r.right_miss) == (1, 1)
    assert (r.x0, r.x1) == (1, 9)
    assert abs(r.mae_dx - 0.10) <= 1e-9
    assert r.mae_y == pytest.approx(0, abs=1e-12)


def test_interp_default_grid_is_1000():
    s = Series.from_xy("a", [(0, 0), (1, 1)])
    assert interpolation_metrics(s, s).grid_size == 1000


def test_interp_overlap_y_range_base():
    # truth rises 0..10 over [0, 10]; only [0, 5] is shared, where it spans 0..5
    truth = Series.from_xy("t", [(0, 0), (10, 10)])
    ext = Series.from_xy("e", [(0, 1), (5, 6)])
    r = interpolation_metrics(truth, ext)
    assert r.mae_y_raw == pytest.approx(1.0)
    assert r.mae_y == pytest.approx(1.0 / 5)
    full = interpolation_metrics(truth, ext, y_base="truth_full")
    assert full.mae_y == pytest.approx(1.0 / 10)


def test_interp_no_overlap_degenerate():
    truth = Series.from_xy("t", [(0, 0), (1, 1)])
    ext = Series.from_xy("e", [(2, 0), (3, 1)])
    r = interpolation_metrics(truth, ext)
    assert not r.overlap and r.mae_y is None
    assert r.left_miss == r.right_miss == 1
    assert r.mae_dx == 1.0


def test_interp_duplicate_x_collapsed_to_mean():
    truth = Series.from_xy("t", [(0, 0), (1, 0), (1, 2), (2, 2)])
    collapsed = Series.from_xy("c", [(0, 0), (1, 1), (2, 2)])
    assert interpolation_metrics(truth, collapsed).mae_y == 0


def test_interp_needs_two_distinct_x():
    with pytest.raises(ValueError):
        interpolation_metrics(Series.from_xy("t", [(1, 0), (1, 2)]), Series.from_xy("e", [(0, 0), (1, 1)]))


def test_interp_self_zero_random():
    rng = np.random.default_rng(3)
    for _ in range(50):
        n = int(rng.integers(2, 30))
        s = Series.from_xy("s", zip(rng.normal(size=n) * 100, rng.normal(size=n)))
        r = interpolation_metrics(s, s)
        assert r.mae_y == 0.0 and r.mae_dx == 0.0


def test_grid_refinement_converges():
    xs = np.linspace(0, 2 * np.pi, 40)
    truth = Series.from_xy("t", zip(xs, np.sin(xs)))
    xe = np.linspace(0.2, 6.0, 25)
    ext = Series.from_xy("e", zip(xe, np.sin(xe) + 0.3 * np.cos(3 * xe)))
    fine = np.linspace(0.2, 6.0, 400001)
    gap = np.abs(np.interp(fine, xe, np.array(ext.ys)) - np.interp(fine, xs, np.sin(xs)))
    variation = float(np.abs(np.diff(gap)).sum())
    prev = None
    for n in (250, 500, 1000, 2000):
        a = interpolation_metrics(truth, ext, grid_size=n).mae_y_raw
        b = interpolation_metrics(truth, ext, grid_size=2 * n).mae_y_raw
        change = abs(b - a)
        assert change <= 2 * variation / (n - 1)
        if prev is not None:
            assert change <= prev
        prev = change


# -- pair_series -------------------------------------------------------------


def test_pair_by_name_any_order():
    a = Series.from_xy("A", [(0, 0)])
    b = Series.from_xy("B", [(5, 5)])
    ext_a = Series.from_xy("a", [(5, 5)])  # deliberately placed near B
    ext_b = Series.from_xy("b", [(0, 0)])
    res = pair_series(plot(a, b), plot(ext_b, ext_a))
    assert res.pairs == ((a, ext_a), (b, ext_b))


def test_unnamed_single_series_pair():
    t = Series.from_xy("", [(0, 0), (1, 1)])
    e = Series.from_xy("", [(0, 0.1), (1, 1.2)])
    res = pair_series(plot(t), plot(e))
    assert res.pairs == ((t, e),)


def test_centroid_pairing_leaves_unpaired_truth():
    ta = Series.from_xy("low", [(0, 0), (1, 0)])  # centroid (0.5, 0)
    tb = Series.from_xy("high", [(0, 10), (1, 10)])  # centroid (0.5, 10)
    e = Series.from_xy("fit", [(0, 9), (1, 9.5)])  # centroid (0.5, 9.25)
    # normalized distances over ranges x:1, y:10 -> low 0.925, high 0.075
    res = pair_series(plot(ta, tb), plot(e))
    assert res.pairs == ((tb, e),)
    assert res.unpaired_truth == (ta,)
    assert res.unpaired_extracted == ()


def test_unpaired_series_count_as_errors():
    ta = Series.from_xy("a", [(0, 0), (1, 0)])
    tb = Series.from_xy("b", [(0, 10), (1, 10), (2, 10)])
    rep = evaluate_plot(plot(ta, tb), plot(Series.from_xy("a", [(0, 0), (1, 0)])))
    assert rep.pointwise.n_matched == 2
    assert rep.pointwise.n_unmatched_truth == 3
    assert rep.pointwise.recall == pytest.approx(2 / 5)
    assert rep.pointwise.precision == 1


# -- classification ----------------------------------------------------------


def _outcomes(statuses):
    data = plot(Series.from_xy("a", [(0, 0)]))
    return [
        ExtractionOutcome(s, data=data if s in (Status.ACCEPTED, Status.VISUAL_MISMATCH) else None)
        for s in statuses
    ]


def test_classification_perfect():
    recs = list(zip([True] * 10 + [False] * 2, _outcomes([Status.ACCEPTED] * 10 + [Status.NO_DATA] * 2)))
    r = classification_metrics(recs)
    assert (r.precision, r.recall) == (1.0, 1.0)


def test_classification_one_flagged():
    statuses = [Status.ACCEPTED] * 9 + [Status.VISUAL_MISMATCH] + [Status.NO_DATA, Status.VISUAL_MISMATCH]
    r = classification_metrics(zip([True] * 10 + [False] * 2, _outcomes(statuses)))
    assert (r.tp, r.fp, r.fn, r.tn) == (9, 0, 1, 2)
    assert r.precision == 1.0 and r.recall == pytest.approx(0.9)


def test_classification_false_accept():
    statuses = [Status.ACCEPTED] * 10 + [Status.ACCEPTED, Status.NO_DATA]
    r = classification_metrics(zip([True] * 10 + [False] * 2, _outcomes(statuses)))
    assert r.precision == pytest.approx(10 / 11) and r.recall == 1.0


def test_classification_accepts_bare_status():
    r = classification_metrics([(True, Status.FAILURE), (False, "no_data")])
    assert (r.tp, r.fn, r.tn) == (0, 1, 1) and r.precision is None


# -- aggregate ---------------------------------------------------------------


def _report(matched, fp, fn, x_err=(), y_err=()):
    n = matched
    pw = PointwiseReport(
        mae_x=sum(x_err) / len(x_err) if x_err else None,
        mae_y=sum(y_err) / len(y_err) if y_err else None,
        precision=n / (n + fp) if n + fp else None,
        recall=n / (n + fn) if n + fn else None,
        n_matched=n, n_unmatched_extracted=fp, n_unmatched_truth=fn,
        x_errors=tuple(x_err), y_errors=tuple(y_err),
    )
    return PlotReport(pointwise=pw)


def test_aggregate_per_plot_vs_per_point():
    r1 = _report(1, 0, 0, x_err=[0.1], y_err=[0.0])
    r2 = _report(3, 3, 0, x_err=[0.0, 0.0, 0.2], y_err=[0.3, 0.3, 0.3])
    pp = aggregate([r1, r2], "per_plot")["pointwise"]
    pt = aggregate([r1, r2], "per_point")["pointwise"]
    assert pp["precision"] == pytest.approx(0.75)
    assert pt["precision"] == pytest.approx(4 / 7)
    # per plot: mean(0.1, 0.2/3); per point: (0.1 + 0.2) / 4
    assert pp["mae_x"] == pytest.approx((0.1 + 0.2 / 3) / 2)
    assert pt["mae_x"] == pytest.approx(0.3 / 4)


def test_aggregate_single_plot_modes_agree():
    truth = plot(Series.from_xy("a", [(0, 0), (1, 1), (2, 4)]), Series.from_xy("b", [(0, 3), (2, 1)]))
    ext = plot(Series.from_xy("a", [(0.1, 0), (1, 1.2)]), Series.from_xy("b", [(0, 3.3), (1.8, 1)]))
    rep = evaluate_plot(truth, ext)
    a, b = aggregate([rep], "per_plot"), aggregate([rep], "per_point")
    for block in ("pointwise", "interpolation"):
        for key, val in a[block].items():
            assert val == pytest.approx(b[block][key], abs=1e-15)


def test_aggregate_identical_plots():
    truth = plot(Series.from_xy("a", [(0, 0), (1, 1), (2, 4)]))
    ext = plot(Series.from_xy("a", [(0.1, 0), (1, 1.2), (2.2, 3.9)]))
    rep = evaluate_plot(truth, ext)
    a, b = aggregate([rep] * 4, "per_plot"), aggregate([rep] * 4, "per_point")
    single = aggregate([rep], "per_plot")
    for block in ("pointwise", "interpolation"):
        for key, val in single[block].items():
            assert a[block][key] == pytest.approx(val, abs=1e-15)
            assert b[block][key] == pytest.approx(val, abs=1e-15)


def test_aggregate_excludes_undefined_mae_from_means():
    r1 = _report(0, 2, 2)
    r2 = _report(2, 0, 0, x_err=[0.1, 0.3], y_err=[0.0, 0.0])
    pp = aggregate([r1, r2], "per_plot")["pointwise"]
    assert pp["mae_x"] == pytest.approx(0.2)
    assert pp["precision"] == pytest.approx(0.5)


def test_aggregate_rejects_empty_and_bad_mode():
    with pytest.raises(ValueError):
        aggregate([], "per_plot")
    with pytest.raises(ValueError):
        aggregate([_report(1, 0, 0, [0.0], [0.0])], "weekly")


def test_interior_leftovers_still_matched():
    # leftovers (10,0) and (9.7,0) are both set ends, not start-vs-end: keep matching
    truth = pts((0, 0), (10, 0))
    ext = pts((0.1, 0), (9.7, 0))
    m = match_points(truth, ext, combined_ranges(truth, ext))
    assert len(m.pairs) == 2


def test_offset_curves_leave_opposite_ends_unmatched():
    truth = pts(*[(x, x) for x in range(0, 11)])
    ext = pts(*[(x + 0.05, x) for x in range(3, 14)])
    m = match_points(truth, ext, combined_ranges(truth, ext))
    assert {p.x for p in m.unmatched_truth} == {0, 1, 2}
    assert {p.x for p in m.unmatched_extracted} == {11.05, 12.05, 13.05}
