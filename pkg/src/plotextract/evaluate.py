"""Accuracy of extracted plot data against ground truth.

Two complementary comparisons are implemented. The pointwise comparison pairs
individual points greedily in range-normalized space and reports MAE in x and
y together with precision and recall. The interpolation comparison linearly
interpolates both curves onto a shared grid over their common x-range and
reports the mean vertical gap plus how much of the x-extent was missed at
either end. Classification metrics score the accept/reject decision, and
``aggregate`` folds per-plot results into per-plot or per-point summaries.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .model import ExtractionOutcome, PlotData, Point, Series, Status

DEFAULT_GRID_SIZE = 1000
Y_BASES = ("truth_overlap", "truth_full")
X_BASES = ("truth_full", "combined")


@dataclass(frozen=True)
class Ranges:
    x_min: float
    x_max: float
    y_min: float
    y_max: float

    @property
    def x_span(self) -> float:
        # degenerate axis: fall back to absolute distances
        return _span(self.x_min, self.x_max)

    @property
    def y_span(self) -> float:
        return _span(self.y_min, self.y_max)


def _span(lo: float, hi: float) -> float:
    d = hi - lo
    return d if d > 0 else 1.0


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[Point, Point], ...]
    unmatched_truth: tuple[Point, ...]
    unmatched_extracted: tuple[Point, ...]
    ranges: Ranges


@dataclass(frozen=True)
class PointwiseReport:
    mae_x: float | None
    mae_y: float | None
    precision: float | None
    recall: float | None
    n_matched: int
    n_unmatched_extracted: int
    n_unmatched_truth: int
    # per-pair errors as fractions of the axis span, kept for per-point pooling
    x_errors: tuple[float, ...] = field(default=(), repr=False)
    y_errors: tuple[float, ...] = field(default=(), repr=False)

    @property
    def n_truth(self) -> int:
        return self.n_matched + self.n_unmatched_truth

    @property
    def n_extracted(self) -> int:
        return self.n_matched + self.n_unmatched_extracted


@dataclass(frozen=True)
class InterpReport:
    mae_y: float | None
    mae_dx: float
    mae_y_raw: float | None
    mae_dx_raw: float
    left_miss: float
    right_miss: float
    x0: float
    x1: float
    grid_size: int
    overlap: bool


@dataclass(frozen=True)
class ClassReport:
    tp: int
    fp: int
    fn: int
    tn: int
    precision: float | None
    recall: float | None


@dataclass(frozen=True)
class SeriesPairing:
    pairs: tuple[tuple[Series, Series], ...]
    unpaired_truth: tuple[Series, ...]
    unpaired_extracted: tuple[Series, ...]


@dataclass(frozen=True)
class PlotReport:
    pointwise: PointwiseReport
    interpolation: tuple[InterpReport, ...] = ()
    n_pairs: int = 0
    n_unpaired_truth: int = 0
    n_unpaired_extracted: int = 0

    @property
    def interp_mae_y(self) -> float | None:
        vals = [r.mae_y for r in self.interpolation if r.mae_y is not None]
        return _mean(vals)

    @property
    def interp_mae_dx(self) -> float | None:
        return _mean([r.mae_dx for r in self.interpolation])


def _mean(values: Sequence[float]) -> float | None:
    return sum(values) / len(values) if values else None


# -- pointwise comparison ---------------------------------------------------


def combined_ranges(truth: Sequence[Point], extracted: Sequence[Point]) -> Ranges:
    if not truth or not extracted:
        raise ValueError("combined_ranges needs non-empty truth and extracted point lists")
    xs = [p.x for p in truth] + [p.x for p in extracted]
    ys = [p.y for p in truth] + [p.y for p in extracted]
    return Ranges(min(xs), max(xs), min(ys), max(ys))


def _head_tail_split(left_a, used_a, left_b, used_b) -> bool:
    """True when a's leftovers are its lowest-x points, b's leftovers its highest-x
    points, and the two leftover groups do not overlap in x."""
    head = max(p.x for p in left_a)
    tail = min(p.x for p in left_b)
    return head <= min(p.x for p in used_a) and tail >= max(p.x for p in used_b) and head < tail


def _should_stop(left_t, used_t, left_e, used_e) -> bool:
    if not left_t or not left_e:
        return True
    return _head_tail_split(left_t, used_t, left_e, used_e) or _head_tail_split(left_e, used_e, left_t, used_t)


def match_points(truth: Sequence[Point], extracted: Sequence[Point], ranges: Ranges) -> Matching:
    """Greedy matching on range-normalized Euclidean distance.

    The globally closest remaining (truth, extracted) pair is matched and
    removed, repeatedly, until one side runs out. After each match the loop
    also halts if the leftovers are the low-x start of one set and the high-x
    end of the other with no x-overlap between them, so the unrelated ends of
    two offset curves are never paired. Ties are broken by truth index, then
    extracted index.
    """
    truth, extracted = list(truth), list(extracted)
    n, m = len(truth), len(extracted)
    if n == 0 or m == 0:
        return Matching((), tuple(truth), tuple(extracted), ranges)

    to = np.array([[p.x, p.y] for p in truth], dtype=float)
    ex = np.array([[p.x, p.y] for p in extracted], dtype=float)
    dx = (ex[None, :, 0] - to[:, None, 0]) / ranges.x_span
    dy = (ex[None, :, 1] - to[:, None, 1]) / ranges.y_span
    dist = np.sqrt(dx * dx + dy * dy)
    # lexsort keys: last is primary -> (distance, truth index, extracted index)
    ii, jj = np.meshgrid(np.arange(n), np.arange(m), indexing="ij")
    order = np.lexsort((jj.ravel(), ii.ravel(), dist.ravel()))

    used_t = [False] * n
    used_e = [False] * m
    pairs = []
    for flat in order:
        i, j = divmod(int(flat), m)
        if used_t[i] or used_e[j]:
            continue
        used_t[i] = used_e[j] = True
        pairs.append((truth[i], extracted[j]))
        left_t = [p for p, u in zip(truth, used_t) if not u]
        left_e = [p for p, u in zip(extracted, used_e) if not u]
        matched_t = [p for p, u in zip(truth, used_t) if u]
        matched_e = [p for p, u in zip(extracted, used_e) if u]
        if _should_stop(left_t, matched_t, left_e, matched_e):
            break

    return Matching(
        pairs=tuple(pairs),
        unmatched_truth=tuple(p for p, u in zip(truth, used_t) if not u),
        unmatched_extracted=tuple(p for p, u in zip(extracted, used_e) if not u),
        ranges=ranges,
    )


def pointwise_metrics(matching: Matching) -> PointwiseReport:
    n = len(matching.pairs)
    n_fp = len(matching.unmatched_extracted)
    n_fn = len(matching.unmatched_truth)
    xs, ys = matching.ranges.x_span, matching.ranges.y_span
    x_err = tuple(abs(e.x - o.x) / xs for o, e in matching.pairs)
    y_err = tuple(abs(e.y - o.y) / ys for o, e in matching.pairs)
    if n:
        mae_x = sum(abs(e.x - o.x) for o, e in matching.pairs) / n / xs
        mae_y = sum(abs(e.y - o.y) for o, e in matching.pairs) / n / ys
    else:
        mae_x = mae_y = None
    return PointwiseReport(
        mae_x=mae_x,
        mae_y=mae_y,
        precision=n / (n + n_fp) if n + n_fp else None,
        recall=n / (n + n_fn) if n + n_fn else None,
        n_matched=n,
        n_unmatched_extracted=n_fp,
        n_unmatched_truth=n_fn,
        x_errors=x_err,
        y_errors=y_err,
    )


def compare_points(truth: Sequence[Point], extracted: Sequence[Point]) -> PointwiseReport:
    return pointwise_metrics(match_points(truth, extracted, combined_ranges(truth, extracted)))


# -- interpolation comparison -----------------------------------------------


def _collapse(series: Series) -> tuple[np.ndarray, np.ndarray]:
    """Sorted unique x with the mean y of duplicated x values."""
    xs = np.array(series.xs, dtype=float)
    ys = np.array(series.ys, dtype=float)
    ux, inverse = np.unique(xs, return_inverse=True)
    sums = np.bincount(inverse, weights=ys)
    counts = np.bincount(inverse)
    return ux, sums / counts


def _range_on(xs: np.ndarray, ys: np.ndarray, lo: float, hi: float) -> float:
    """Exact y-range of the piecewise-linear curve restricted to [lo, hi]."""
    inside = ys[(xs > lo) & (xs < hi)]
    ends = np.interp([lo, hi], xs, ys)
    vals = np.concatenate([inside, ends])
    return float(vals.max() - vals.min())


def interpolation_metrics(
    truth: Series,
    extracted: Series,
    grid_size: int = DEFAULT_GRID_SIZE,
    y_base: str = "truth_overlap",
    x_base: str = "truth_full",
) -> InterpReport:
    """Compare two curves after linear interpolation onto a common grid.

    ``y_base`` picks the normaliser for the vertical error: the truth curve's
    y-range over the overlap (default) or over its full extent. ``x_base``
    picks the normaliser for the end-miss error: the truth x-range (default)
    or the x-range of both curves combined.
    """
    if y_base not in Y_BASES or x_base not in X_BASES:
        raise ValueError(f"unknown normalisation base {y_base!r}/{x_base!r}")
    if grid_size < 2:
        raise ValueError("grid_size must be at least 2")
    tx, ty = _collapse(truth)
    ex, ey = _collapse(extracted)
    if len(tx) < 2 or len(ex) < 2:
        raise ValueError("interpolation needs at least 2 distinct x values per series")

    t_xspan = float(tx[-1] - tx[0])
    x_norm = t_xspan if x_base == "truth_full" else _span(min(tx[0], ex[0]), max(tx[-1], ex[-1]))
    left = float(ex[0] - tx[0])
    right = float(tx[-1] - ex[-1])
    x0, x1 = max(tx[0], ex[0]), min(tx[-1], ex[-1])

    if x0 > x1:
        # nothing of the truth curve was recovered
        dx_raw = t_xspan
        return InterpReport(
            mae_y=None, mae_dx=dx_raw / x_norm, mae_y_raw=None, mae_dx_raw=dx_raw,
            left_miss=t_xspan, right_miss=t_xspan, x0=float(x0), x1=float(x1),
            grid_size=grid_size, overlap=False,
        )

    grid = np.linspace(x0, x1, grid_size)
    diff = np.abs(np.interp(grid, ex, ey) - np.interp(grid, tx, ty))
    raw = float(diff.mean())
    if y_base == "truth_overlap":
        y_norm = _range_on(tx, ty, x0, x1)
    else:
        y_norm = float(ty.max() - ty.min())
    y_norm = y_norm if y_norm > 0 else 1.0
    dx_raw = (abs(left) + abs(right)) / 2
    return InterpReport(
        mae_y=raw / y_norm, mae_dx=dx_raw / x_norm, mae_y_raw=raw, mae_dx_raw=dx_raw,
        left_miss=left, right_miss=right, x0=float(x0), x1=float(x1),
        grid_size=grid_size, overlap=True,
    )


# -- series pairing and per-plot evaluation ---------------------------------


def _centroid(s: Series) -> tuple[float, float]:
    return sum(s.xs) / len(s.points), sum(s.ys) / len(s.points)


def pair_series(truth: PlotData, extracted: PlotData) -> SeriesPairing:
    """Pair series by case-insensitive name, then greedily by normalized centroid distance."""
    t_left = list(range(len(truth.series)))
    e_left = list(range(len(extracted.series)))
    pairs: list[tuple[int, int]] = []

    for i in list(t_left):
        key = truth.series[i].name.casefold()
        for j in e_left:
            if extracted.series[j].name.casefold() == key:
                pairs.append((i, j))
                t_left.remove(i)
                e_left.remove(j)
                break

    if t_left and e_left:
        r = combined_ranges(truth.all_points(), extracted.all_points())
        cands = []
        for i in t_left:
            cx, cy = _centroid(truth.series[i])
            for j in e_left:
                ex, ey = _centroid(extracted.series[j])
                d = math.hypot((ex - cx) / r.x_span, (ey - cy) / r.y_span)
                cands.append((d, i, j))
        cands.sort()
        for _, i, j in cands:
            if i in t_left and j in e_left:
                pairs.append((i, j))
                t_left.remove(i)
                e_left.remove(j)

    return SeriesPairing(
        pairs=tuple((truth.series[i], extracted.series[j]) for i, j in pairs),
        unpaired_truth=tuple(truth.series[i] for i in t_left),
        unpaired_extracted=tuple(extracted.series[j] for j in e_left),
    )


def merge_pointwise(reports: Iterable[PointwiseReport], extra_fn: int = 0, extra_fp: int = 0) -> PointwiseReport:
    """Pool several pointwise reports (e.g. the series of one plot) into one."""
    reports = list(reports)
    n = sum(r.n_matched for r in reports)
    fp = sum(r.n_unmatched_extracted for r in reports) + extra_fp
    fn = sum(r.n_unmatched_truth for r in reports) + extra_fn
    xe = tuple(e for r in reports for e in r.x_errors)
    ye = tuple(e for r in reports for e in r.y_errors)
    return PointwiseReport(
        mae_x=_mean(xe),
        mae_y=_mean(ye),
        precision=n / (n + fp) if n + fp else None,
        recall=n / (n + fn) if n + fn else None,
        n_matched=n,
        n_unmatched_extracted=fp,
        n_unmatched_truth=fn,
        x_errors=xe,
        y_errors=ye,
    )


def evaluate_plot(
    truth: PlotData,
    extracted: PlotData,
    grid_size: int = DEFAULT_GRID_SIZE,
    y_base: str = "truth_overlap",
    x_base: str = "truth_full",
) -> PlotReport:
    pairing = pair_series(truth, extracted)
    pointwise = []
    interp = []
    for t, e in pairing.pairs:
        pointwise.append(compare_points(t.points, e.points))
        try:
            interp.append(interpolation_metrics(t, e, grid_size, y_base=y_base, x_base=x_base))
        except ValueError:
            pass  # single-x series cannot be interpolated
    return PlotReport(
        pointwise=merge_pointwise(
            pointwise,
            extra_fn=sum(len(s.points) for s in pairing.unpaired_truth),
            extra_fp=sum(len(s.points) for s in pairing.unpaired_extracted),
        ),
        interpolation=tuple(interp),
        n_pairs=len(pairing.pairs),
        n_unpaired_truth=len(pairing.unpaired_truth),
        n_unpaired_extracted=len(pairing.unpaired_extracted),
    )


# -- classification and aggregation -----------------------------------------


def classification_metrics(records: Iterable[tuple[bool, ExtractionOutcome | Status]]) -> ClassReport:
    """Score the accept/reject decision; positive class = extractable, predicted by Accepted."""
    tp = fp = fn = tn = 0
    for extractable, outcome in records:
        status = outcome.status if isinstance(outcome, ExtractionOutcome) else Status(outcome)
        predicted = status is Status.ACCEPTED
        if predicted and extractable:
            tp += 1
        elif predicted:
            fp += 1
        elif extractable:
            fn += 1
        else:
            tn += 1
    return ClassReport(
        tp=tp, fp=fp, fn=fn, tn=tn,
        precision=tp / (tp + fp) if tp + fp else None,
        recall=tp / (tp + fn) if tp + fn else None,
    )


def aggregate(reports: Sequence[PlotReport], mode: str) -> dict[str, dict[str, float | None]]:
    """Summarise per-plot reports.

    ``per_plot`` averages each plot's metric with equal weight (plots without
    matched pairs drop out of the MAE means only). ``per_point`` pools counts
    and matched-pair errors across plots, so every point carries equal weight;
    for the interpolation block every series pair carries equal weight.
    """
    if not reports:
        raise ValueError("aggregate needs at least one plot report")
    if mode == "per_plot":
        pw = [r.pointwise for r in reports]
        pointwise = {
            "precision": _mean([r.precision for r in pw if r.precision is not None]),
            "recall": _mean([r.recall for r in pw if r.recall is not None]),
            "mae_x": _mean([r.mae_x for r in pw if r.mae_x is not None]),
            "mae_y": _mean([r.mae_y for r in pw if r.mae_y is not None]),
        }
        interpolation = {
            "mae_y": _mean([v for v in (r.interp_mae_y for r in reports) if v is not None]),
            "mae_dx": _mean([v for v in (r.interp_mae_dx for r in reports) if v is not None]),
        }
    elif mode == "per_point":
        pooled = merge_pointwise(r.pointwise for r in reports)
        pointwise = {
            "precision": pooled.precision,
            "recall": pooled.recall,
            "mae_x": pooled.mae_x,
            "mae_y": pooled.mae_y,
        }
        curves = [c for r in reports for c in r.interpolation]
        interpolation = {
            "mae_y": _mean([c.mae_y for c in curves if c.mae_y is not None]),
            "mae_dx": _mean([c.mae_dx for c in curves]),
        }
    else:
        raise ValueError(f"unknown aggregation mode {mode!r}")
    return {"pointwise": pointwise, "interpolation": interpolation}
