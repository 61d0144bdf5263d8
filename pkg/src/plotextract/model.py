"""Plot content model shared by every stage, plus its JSON and CSV encodings."""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, replace
from typing import Any, Iterable

SIGNIFICANT_DIGITS = 12

NON_FINITE = "non-finite coordinate"
EMPTY_SERIES = "empty series"
NO_SERIES = "no series"
MISSING_AXIS_LABEL = "missing axis label"
BAD_SCALE = "unknown axis scale"

SCALES = ("linear", "log")


class InvalidPlotData(ValueError):
    """Raised when plot content breaks one of the model invariants."""

    def __init__(self, violations: list[Violation]):
        self.violations = violations
        super().__init__("; ".join(str(v) for v in violations))


class SchemaError(ValueError):
    """Raised when a JSON document does not follow the plot-data schema."""


@dataclass(frozen=True)
class Point:
    x: float
    y: float

    def is_finite(self) -> bool:
        return math.isfinite(self.x) and math.isfinite(self.y)


@dataclass(frozen=True)
class Series:
    name: str
    points: tuple[Point, ...]

    @classmethod
    def from_xy(cls, name: str, xy: Iterable[tuple[float, float]]) -> Series:
        return cls(name, tuple(Point(float(x), float(y)) for x, y in xy))

    @property
    def xs(self) -> list[float]:
        return [p.x for p in self.points]

    @property
    def ys(self) -> list[float]:
        return [p.y for p in self.points]


@dataclass(frozen=True)
class AxisSpec:
    label: str
    unit: str = ""
    scale: str = "linear"


@dataclass(frozen=True)
class PlotData:
    x_axis: AxisSpec
    y_axis: AxisSpec
    series: tuple[Series, ...]
    title: str | None = None

    def all_points(self) -> list[Point]:
        return [p for s in self.series for p in s.points]


@dataclass(frozen=True)
class Violation:
    kind: str
    where: str

    def __str__(self) -> str:
        return f"{self.kind} at {self.where}"


class Status(str, enum.Enum):
    ACCEPTED = "accepted"
    NO_DATA = "no_data"
    VISUAL_MISMATCH = "visual_mismatch"
    FAILURE = "failure"


@dataclass(frozen=True)
class ExtractionOutcome:
    status: Status
    data: PlotData | None = None
    diagnostics: tuple[str, ...] = ()
    transcript_id: str = ""
    executions: int = 0

    def __post_init__(self):
        carries_data = self.status in (Status.ACCEPTED, Status.VISUAL_MISMATCH)
        if carries_data and self.data is None:
            raise ValueError(f"{self.status.value} outcome requires data")
        if self.status is Status.NO_DATA and self.data is not None:
            raise ValueError("no_data outcome must not carry data")

    def to_dict(self) -> dict[str, Any]:
        return {
            "status": self.status.value,
            "transcript_id": self.transcript_id,
            "executions": self.executions,
            "diagnostics": list(self.diagnostics),
        }


def validate_plot_data(candidate: PlotData) -> list[Violation]:
    """Return every invariant violation in ``candidate``; an empty list means valid."""
    violations = []
    for name, axis in (("x_axis", candidate.x_axis), ("y_axis", candidate.y_axis)):
        if not axis.label.strip():
            violations.append(Violation(MISSING_AXIS_LABEL, name))
        if axis.scale not in SCALES:
            violations.append(Violation(BAD_SCALE, name))
    if not candidate.series:
        violations.append(Violation(NO_SERIES, "series"))
    for i, s in enumerate(candidate.series):
        if not s.points:
            violations.append(Violation(EMPTY_SERIES, f"series[{i}]"))
        for j, p in enumerate(s.points):
            if not p.is_finite():
                violations.append(Violation(NON_FINITE, f"series[{i}].points[{j}]"))
    return violations


def _unique_names(names: list[str]) -> list[str]:
    filled = [n if n.strip() else f"series {i + 1}" for i, n in enumerate(names)]
    used: set[str] = set()
    out = []
    for name in filled:
        candidate, k = name, 2
        while candidate in used:
            candidate = f"{name} ({k})"
            k += 1
        used.add(candidate)
        out.append(candidate)
    return out


def canonicalize(raw: PlotData) -> PlotData:
    """Sort every series by x (stable) and make series names unique and non-empty.

    Raises InvalidPlotData if ``raw`` has any violation.
    """
    violations = validate_plot_data(raw)
    if violations:
        raise InvalidPlotData(violations)
    names = _unique_names([s.name for s in raw.series])
    series = tuple(
        Series(name, tuple(sorted(s.points, key=lambda p: p.x)))
        for name, s in zip(names, raw.series)
    )
    return replace(raw, series=series)


# -- encoding ---------------------------------------------------------------


def quantize(v: float) -> float:
    """Round to the number of significant digits used on disk."""
    return float(f"{v:.{SIGNIFICANT_DIGITS}g}")


def _axis_to_dict(axis: AxisSpec) -> dict[str, Any]:
    return {"label": axis.label, "unit": axis.unit, "scale": axis.scale}


def to_dict(p: PlotData) -> dict[str, Any]:
    return {
        "title": p.title,
        "x_axis": _axis_to_dict(p.x_axis),
        "y_axis": _axis_to_dict(p.y_axis),
        "series": [
            {"name": s.name, "points": [[quantize(pt.x), quantize(pt.y)] for pt in s.points]}
            for s in p.series
        ],
    }


def _reject_constant(token: str):
    raise SchemaError(f"non-finite number {token!r} not allowed")


def _expect(cond: bool, msg: str) -> None:
    if not cond:
        raise SchemaError(msg)


def _number(v: Any, where: str) -> float:
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool), f"{where}: expected a number")
    return float(v)


def _axis_from_dict(d: Any, where: str) -> AxisSpec:
    _expect(isinstance(d, dict), f"{where}: expected an object")
    label = d.get("label")
    unit = d.get("unit", "")
    scale = d.get("scale", "linear")
    _expect(isinstance(label, str), f"{where}.label: expected a string")
    _expect(isinstance(unit, str), f"{where}.unit: expected a string")
    _expect(scale in SCALES, f"{where}.scale: expected one of {SCALES}")
    return AxisSpec(label, unit, scale)


def from_dict(d: Any) -> PlotData:
    """Build PlotData from a decoded JSON object; shape errors raise SchemaError."""
    _expect(isinstance(d, dict), "top level: expected an object")
    for key in ("x_axis", "y_axis", "series"):
        _expect(key in d, f"missing key {key!r}")
    title = d.get("title")
    _expect(title is None or isinstance(title, str), "title: expected a string or null")
    raw_series = d["series"]
    _expect(isinstance(raw_series, list), "series: expected a list")
    series = []
    for i, s in enumerate(raw_series):
        _expect(isinstance(s, dict), f"series[{i}]: expected an object")
        name = s.get("name", "")
        _expect(isinstance(name, str), f"series[{i}].name: expected a string")
        pts = s.get("points")
        _expect(isinstance(pts, list), f"series[{i}].points: expected a list")
        points = []
        for j, pt in enumerate(pts):
            where = f"series[{i}].points[{j}]"
            _expect(isinstance(pt, list) and len(pt) == 2, f"{where}: expected [x, y]")
            points.append(Point(_number(pt[0], where), _number(pt[1], where)))
        series.append(Series(name, tuple(points)))
    return PlotData(
        x_axis=_axis_from_dict(d["x_axis"], "x_axis"),
        y_axis=_axis_from_dict(d["y_axis"], "y_axis"),
        series=tuple(series),
        title=title,
    )


def dumps(p: PlotData, indent: int | None = 2) -> str:
    if indent is None:
        return json.dumps(to_dict(p), separators=(",", ":"), ensure_ascii=False)
    return json.dumps(to_dict(p), indent=indent, ensure_ascii=False) + "\n"


def loads(text: str) -> PlotData:
    try:
        obj = json.loads(text, parse_constant=_reject_constant)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"invalid JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc
    return from_dict(obj)


def to_csv(p: PlotData) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["series", "x", "y"])
    for s in p.series:
        for pt in s.points:
            writer.writerow([s.name, repr(quantize(pt.x)), repr(quantize(pt.y))])
    return buf.getvalue()


def from_csv(text: str, x_axis: AxisSpec, y_axis: AxisSpec) -> PlotData:
    reader = csv.DictReader(io.StringIO(text))
    if reader.fieldnames != ["series", "x", "y"]:
        raise SchemaError(f"CSV header must be series,x,y, got {reader.fieldnames}")
    grouped: dict[str, list[Point]] = {}
    for row in reader:
        grouped.setdefault(row["series"], []).append(Point(float(row["x"]), float(row["y"])))
    return PlotData(x_axis, y_axis, tuple(Series(n, tuple(pts)) for n, pts in grouped.items()))
