"""Evaluation reports: pair extraction results with ground truth and summarise them."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any

import jsonschema

from .evaluate import DEFAULT_GRID_SIZE, PlotReport, aggregate, classification_metrics, evaluate_plot
from .model import PlotData, Status, from_dict, loads

REPORT_FORMAT = "plotextract.report/1"
MODES = ("per_plot", "per_point")


class NoOverlap(ValueError):
    pass


class MalformedReport(ValueError):
    pass


@dataclass
class TruthSet:
    data: dict[str, PlotData] = field(default_factory=dict)
    extractable: dict[str, bool] = field(default_factory=dict)


@dataclass
class ResultSet:
    data: dict[str, PlotData] = field(default_factory=dict)
    statuses: dict[str, Status] = field(default_factory=dict)


def load_truth(root: str | Path) -> TruthSet:
    """Ground truth from a benchmark manifest, ``<stem>.json`` files or ``<stem>/truth.json``."""
    root = Path(root)
    out = TruthSet()
    manifest = root / "manifest.json"
    if manifest.is_file():
        for p in json.loads(manifest.read_text(encoding="utf-8"))["plots"]:
            out.data[p["id"]] = from_dict(p["truth"])
            out.extractable[p["id"]] = bool(p["extractable"])
        return out
    for path in sorted(root.glob("*.json")):
        out.data[path.stem] = loads(path.read_text(encoding="utf-8"))
    for path in sorted(root.glob("*/truth.json")):
        out.data[path.parent.name] = loads(path.read_text(encoding="utf-8"))
    # without labels every plot that has ground truth counts as extractable
    out.extractable = {stem: True for stem in out.data}
    return out


def load_results(root: str | Path) -> ResultSet:
    """Extraction results from a pipeline output directory or a flat directory of PlotData JSON."""
    root = Path(root)
    out = ResultSet()
    pipeline_layout = (root / "extracted").is_dir() or (root / "outcome").is_dir()
    data_dir = root / "extracted" if pipeline_layout else root
    for path in sorted(data_dir.glob("*.json")):
        out.data[path.stem] = loads(path.read_text(encoding="utf-8"))
    for path in sorted((root / "outcome").glob("*.json")) if pipeline_layout else ():
        out.statuses[path.stem] = Status(json.loads(path.read_text(encoding="utf-8"))["status"])
    return out


def _pointwise_entry(r: PlotReport) -> dict[str, Any]:
    p = r.pointwise
    return {
        "precision": p.precision,
        "recall": p.recall,
        "mae_x": p.mae_x,
        "mae_y": p.mae_y,
        "matched": p.n_matched,
        "unmatched_extracted": p.n_unmatched_extracted,
        "unmatched_truth": p.n_unmatched_truth,
    }


def build_report(
    truth: TruthSet,
    results: ResultSet,
    modes: tuple[str, ...] = MODES,
    grid_size: int = DEFAULT_GRID_SIZE,
    y_base: str = "truth_overlap",
    x_base: str = "truth_full",
) -> dict[str, Any]:
    """Pair files by stem, score accepted extractions of extractable plots, and aggregate.

    Plots labelled unextractable never contribute to accuracy metrics; their
    only effect is on the classification block.
    """
    bad = [m for m in modes if m not in MODES]
    if bad or not modes:
        raise ValueError(f"modes must be drawn from {MODES}")
    have_result = set(results.data) | set(results.statuses)
    stems = sorted(set(truth.data) & have_result)
    if not stems:
        raise NoOverlap("no file stems in common between extracted results and ground truth")

    plots, reports = [], []
    for stem in stems:
        status = results.statuses.get(stem, Status.ACCEPTED if stem in results.data else None)
        extractable = truth.extractable[stem]
        evaluated = extractable and stem in results.data and status is Status.ACCEPTED
        entry: dict[str, Any] = {
            "id": stem,
            "status": status.value if status else None,
            "extractable": extractable,
            "evaluated": evaluated,
            "pointwise": None,
            "interpolation": None,
            "series": None,
        }
        if evaluated:
            rep = evaluate_plot(truth.data[stem], results.data[stem], grid_size, y_base, x_base)
            reports.append(rep)
            entry["pointwise"] = _pointwise_entry(rep)
            entry["interpolation"] = {"mae_y": rep.interp_mae_y, "mae_dx": rep.interp_mae_dx}
            entry["series"] = {
                "paired": rep.n_pairs,
                "unpaired_truth": rep.n_unpaired_truth,
                "unpaired_extracted": rep.n_unpaired_extracted,
            }
        plots.append(entry)

    summaries = {m: aggregate(reports, m) if reports else _empty_summary() for m in modes}
    labelled = [(truth.extractable[s], results.statuses[s]) for s in stems if s in results.statuses]
    cls = classification_metrics(labelled) if labelled else None
    statuses = [results.statuses[s] for s in stems if s in results.statuses]
    counts = {
        "plots": len(stems),
        "with_outcome": len(statuses),
        "evaluated": len(reports),
        "excluded_unextractable": sum(1 for p in plots if not p["extractable"] and p["status"] == "accepted"),
    }
    for st in Status:
        counts[st.value] = sum(1 for s in statuses if s is st)
    points = {
        "matched": sum(r.pointwise.n_matched for r in reports),
        "unmatched_extracted": sum(r.pointwise.n_unmatched_extracted for r in reports),
        "unmatched_truth": sum(r.pointwise.n_unmatched_truth for r in reports),
    }
    return {
        "format": REPORT_FORMAT,
        "settings": {"grid_size": grid_size, "y_base": y_base, "x_base": x_base, "modes": list(modes)},
        "counts": counts,
        "classification": None if cls is None else {
            "tp": cls.tp, "fp": cls.fp, "fn": cls.fn, "tn": cls.tn,
            "precision": cls.precision, "recall": cls.recall,
        },
        "pointwise": {m: summaries[m]["pointwise"] for m in modes},
        "interpolation": {m: summaries[m]["interpolation"] for m in modes},
        "points": points,
        "plots": plots,
        "unpaired": {
            "extracted_without_truth": sorted(have_result - set(truth.data)),
            "truth_without_result": sorted(set(truth.data) - have_result),
        },
    }


def _empty_summary() -> dict[str, dict[str, None]]:
    return {
        "pointwise": {"precision": None, "recall": None, "mae_x": None, "mae_y": None},
        "interpolation": {"mae_y": None, "mae_dx": None},
    }


def report_schema() -> dict[str, Any]:
    return json.loads(resources.files("plotextract").joinpath("data/report.schema.json").read_text(encoding="utf-8"))


def check_report(report: Any) -> None:
    """Raise MalformedReport unless ``report`` matches the schema and its counts add up."""
    try:
        jsonschema.validate(report, report_schema())
    except jsonschema.ValidationError as exc:
        path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise MalformedReport(f"{path}: {exc.message}") from None
    c = report["counts"]
    if sum(c[s.value] for s in Status) != c["with_outcome"]:
        raise MalformedReport("status counts do not add up to the number of outcomes")
    if len(report["plots"]) != c["plots"] or sum(p["evaluated"] for p in report["plots"]) != c["evaluated"]:
        raise MalformedReport("plot list disagrees with counts")
    cls = report["classification"]
    if cls is not None and cls["tp"] + cls["fp"] + cls["fn"] + cls["tn"] != c["with_outcome"]:
        raise MalformedReport("classification counts do not add up to the number of outcomes")


def dumps_report(report: dict[str, Any]) -> str:
    return json.dumps(report, indent=2, sort_keys=True) + "\n"


def _pct(v: float | None) -> str:
    return "n/a" if v is None else f"{100 * v:.1f}%"


def table_rows(report: dict[str, Any]) -> list[tuple[str, list[str]]]:
    """(label, cells) rows; a row with no cells is a section heading."""
    modes = [m for m in MODES if m in report["pointwise"]]
    cls = report["classification"] or {"precision": None, "recall": None}
    rows: list[tuple[str, list[str]]] = [("Plot classification", [])]
    rows += [("Precision", [_pct(cls["precision"])]), ("Recall", [_pct(cls["recall"])])]
    rows.append(("Interpolation comparison", []))
    for key, label in (("mae_y", "MAE_y"), ("mae_dx", "MAE_dx")):
        rows.append((label, [_pct(report["interpolation"][m][key]) for m in modes]))
    rows.append(("Pointwise comparison", []))
    for key, label in (("precision", "Precision"), ("recall", "Recall"), ("mae_y", "MAE_y"), ("mae_x", "MAE_x")):
        rows.append((label, [_pct(report["pointwise"][m][key]) for m in modes]))
    return rows


def format_table(report: dict[str, Any], fmt: str = "text") -> str:
    modes = [m for m in MODES if m in report["pointwise"]]
    headers = ["Per plot" if m == "per_plot" else "Per point" for m in modes]
    rows = table_rows(report)
    c = report["counts"]
    footer = f"{c['plots']} plots, {c['evaluated']} evaluated for accuracy"
    if fmt == "markdown":
        lines = ["| Metric | " + " | ".join(headers) + " |", "|---|" + "---|" * len(headers)]
        for label, cells in rows:
            if not cells:
                lines.append(f"| **{label}** |" + " |" * len(headers))
            else:
                cells = cells + [""] * (len(headers) - len(cells))
                lines.append(f"| {label} | " + " | ".join(cells) + " |")
        return "\n".join(lines) + f"\n\n{footer}\n"
    if fmt != "text":
        raise ValueError(f"unknown table format {fmt!r}")
    width = max(len(label) for label, _ in rows) + 2
    lines = [" " * width + "".join(f"{h:>12}" for h in headers)]
    for label, cells in rows:
        lines.append(label if not cells else f"  {label:<{width - 2}}" + "".join(f"{v:>12}" for v in cells))
    return "\n".join(lines) + f"\n\n{footer}\n"
