"""Regenerate the frozen replay fixtures.

Run from the repository root with ``python tests/fixtures/record_fixtures.py``.
It writes two small synthetic benchmarks, runs the pipeline over them in live
mode against the scripted stand-in model, and stores the whole output
directory as the golden result. Replay tests must reproduce it byte for byte.
Rerunning changes transcript timestamps, so only do it when prompts or the
transcript format change.
"""

from __future__ import annotations

import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from scripted_model import PlotPlan, ScriptedModel  # noqa: E402

from plotextract.gateway import Gateway  # noqa: E402
from plotextract.model import PlotData, Point, Series, canonicalize, quantize  # noqa: E402
from plotextract.pipeline import PipelineConfig, find_images, run_batch  # noqa: E402
from plotextract.synthgen import SynthConfig, generate_dataset  # noqa: E402

SMALL = SynthConfig(width=(480, 640), points_per_series=(5, 15), series_count=(1, 3))
CONFIG = PipelineConfig(interpreter_cmd=sys.executable, sandbox_timeout=60)


def misread(truth: PlotData, rng: np.random.Generator, drop: bool = False, extra: bool = False) -> PlotData:
    """Truth with reading errors of about 1-2% of the axis span, as a model would make."""
    xs = [p.x for p in truth.all_points()]
    ys = [p.y for p in truth.all_points()]
    log_x, log_y = truth.x_axis.scale == "log", truth.y_axis.scale == "log"
    sx = np.ptp(np.log10(xs)) if log_x else np.ptp(xs)
    sy = np.ptp(np.log10(ys)) if log_y else np.ptp(ys)

    def jitter(v: float, span: float, log: bool, scale: float) -> float:
        d = rng.normal(0, scale) * span
        return quantize(10 ** (np.log10(v) + d) if log else v + d)

    series = []
    for s in truth.series:
        pts = [Point(jitter(p.x, sx, log_x, 0.012), jitter(p.y, sy, log_y, 0.008)) for p in s.points]
        if drop and len(pts) > 5:
            pts.pop(len(pts) // 2)
        if extra:
            a, b = pts[-2], pts[-1]
            pts.insert(-1, Point(quantize((a.x + b.x) / 2), quantize((a.y + b.y) / 2)))
        series.append(Series(s.name, tuple(pts)))
    return canonicalize(replace(truth, series=tuple(series)))


def garbled(truth: PlotData) -> PlotData:
    """A confident but wrong reading: y values reversed within each series."""
    series = tuple(Series(s.name, tuple(Point(p.x, q.y) for p, q in zip(s.points, reversed(s.points)))) for s in truth.series)
    return canonicalize(replace(truth, series=series))


def plans_for(bench: Path, entries, behaviours) -> dict[str, PlotPlan]:
    plans = {}
    for entry, plan in zip(entries, behaviours):
        key = ScriptedModel.image_key((bench / entry.image).read_bytes())
        plans[key] = plan
    return plans


def record(name: str, bench_seed: int, n: int, frac: float, choose) -> None:
    root = HERE / name
    shutil.rmtree(root, ignore_errors=True)
    bench = root / "bench"
    manifest = generate_dataset(bench_seed, n, frac, bench, SMALL)
    rng = np.random.default_rng(bench_seed)
    behaviours = choose(manifest.entries, rng)
    model = ScriptedModel(plans_for(bench, manifest.entries, behaviours))
    results = run_batch(find_images(bench), root / "golden", Gateway("live", model), CONFIG, workers=4)
    for stem, outcome in results:
        print(f"{name}/{stem}: {outcome.status.value} executions={outcome.executions}")


def main_behaviours(entries, rng):
    """Two step-1 rejections and one step-4 rejection among the corrupted plots;
    among clean plots a spread of reply formats, one repaired script, one
    clarified verdict and one false step-4 rejection."""
    out = []
    corrupted = 0
    clean = 0
    for e in entries:
        if not e.extractable:
            corrupted += 1
            if corrupted <= 2:
                out.append(PlotPlan(None))
            else:
                out.append(PlotPlan(garbled(e.truth), verdicts=("No. The data in the second image does not match.",)))
            continue
        clean += 1
        reading = misread(e.truth, rng, drop=clean == 3, extra=clean == 6)
        plan = PlotPlan(reading)
        if clean == 1:
            plan = replace(plan, extract_style="fenced")
        elif clean == 2:
            plan = replace(plan, extract_style="prose")
        elif clean == 4:
            plan = replace(plan, extract_style="malformed_then_fixed")
        elif clean == 5:
            plan = replace(plan, broken_scripts=1)
        elif clean == 7:
            plan = replace(plan, verdicts=("The plots look similar overall.", "Yes"))
        elif clean == 8:
            plan = replace(plan, verdicts=("No",))
        out.append(plan)
    return out


def failure_behaviours(entries, rng):
    first = PlotPlan(misread(entries[0].truth, rng), broken_scripts=10)
    return [first] + [PlotPlan(misread(e.truth, rng)) for e in entries[1:]]


if __name__ == "__main__":
    record("replay", bench_seed=2024, n=14, frac=0.2, choose=main_behaviours)
    record("replay_failure", bench_seed=7, n=2, frac=0.0, choose=failure_behaviours)
