"""Randomized synthetic plot benchmarks with exact ground truth.

Every plot draws its data from a scaled standard function (sine, log, linear
or gaussian) with uniform noise, and its appearance from randomized style
choices. Axis labels and units are picked independently from fixed pools so
the pairing is frequently nonsensical, which keeps a model from guessing
values from domain knowledge. A chosen fraction of plots is corrupted so that
accurate extraction is impossible even by hand.
"""

from __future__ import annotations

import hashlib
import json
import functools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np

from .model import AxisSpec, PlotData, Point, Series, canonicalize, dumps, quantize, to_csv, to_dict
from .render import FONT_TOKENS, PLOT_TYPES, RenderTransform, StyleSpec, render_plot, render_transform

FUNCTION_KINDS = ("sine", "log", "linear", "gaussian")
SPACINGS = ("uniform", "random")
CORRUPTIONS = (
    "remove_axis_labels",
    "remove_tick_labels",
    "nonconsecutive_ticks",
    "shuffled_ticks",
    "overlap_series",
)
MANIFEST_FORMAT = "plotextract.manifest/1"

_PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#000000", "#0000ff",
)
_MARKERS = ("o", "s", "^", "v", "D", "x", "+", "*", "<", ">", "p", "h")
_LINE_STYLES = ("-", "--", ":", "-.")
# log(t + shift) keeps the log domain clear of its singularity at 0
_LOG_SHIFT = 0.1


@dataclass(frozen=True)
class SynthConfig:
    """Randomization ranges; every field may be overridden from a config file."""

    series_count: tuple[int, int] = (1, 4)
    points_per_series: tuple[int, int] = (5, 40)
    max_noise: float = 0.15
    font_size: tuple[float, float] = (8.0, 18.0)
    width: tuple[int, int] = (480, 1600)
    aspect: tuple[float, float] = (0.6, 0.9)
    log_axis_probability: float = 0.15
    linear_magnitude: tuple[int, int] = (-3, 4)  # decimal exponent of the axis span
    log_decades: tuple[int, int] = (2, 5)

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> SynthConfig:
        return cls(**{k: tuple(v) if isinstance(v, list) else v for k, v in d.items()})


@dataclass(frozen=True)
class SeriesGen:
    """Everything needed to synthesize one series deterministically.

    For linear axes ``x_range`` is the data interval; for log axes it holds
    the decimal exponents of the interval ends. Likewise on a log y-axis
    ``y_offset`` and ``y_scale`` are in decades and noise is added in
    decade space.
    """

    name: str
    kind: str
    n_points: int
    spacing: str
    noise: float
    y_offset: float
    y_scale: float
    x_range: tuple[float, float]
    x_log: bool = False
    y_log: bool = False
    freq: float = 1.0
    phase: float = 0.0
    center: float = 0.5
    width: float = 0.15
    seed: int = 0


@dataclass(frozen=True)
class PlotSpec:
    style: StyleSpec
    series: tuple[SeriesGen, ...]
    x_axis: AxisSpec
    y_axis: AxisSpec
    extractable: bool = True
    corruption: str | None = None

    def to_dict(self) -> dict[str, Any]:
        return {
            "style": self.style.to_dict(),
            "series": [{**asdict(g), "x_range": list(g.x_range)} for g in self.series],
            "x_axis": asdict(self.x_axis),
            "y_axis": asdict(self.y_axis),
            "extractable": self.extractable,
            "corruption": self.corruption,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> PlotSpec:
        return cls(
            style=StyleSpec.from_dict(d["style"]),
            series=tuple(SeriesGen(**{**g, "x_range": tuple(g["x_range"])}) for g in d["series"]),
            x_axis=AxisSpec(**d["x_axis"]),
            y_axis=AxisSpec(**d["y_axis"]),
            extractable=d["extractable"],
            corruption=d["corruption"],
        )


@dataclass(frozen=True)
class ManifestEntry:
    plot_id: str
    spec: PlotSpec
    truth: PlotData
    image: str
    extractable: bool
    transform: RenderTransform


@dataclass(frozen=True)
class BenchmarkManifest:
    seed: int
    n_plots: int
    corrupt_fraction: float
    entries: tuple[ManifestEntry, ...] = field(repr=False)
    digest: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "format": MANIFEST_FORMAT,
            "seed": self.seed,
            "n_plots": self.n_plots,
            "corrupt_fraction": self.corrupt_fraction,
            "plots": [
                {
                    "id": e.plot_id,
                    "image": e.image,
                    "extractable": e.extractable,
                    "corruption": e.spec.corruption,
                    "spec": e.spec.to_dict(),
                    "truth": to_dict(e.truth),
                    "transform": _quantized_transform(e.transform),
                }
                for e in self.entries
            ],
        }


def _quantized_transform(t: RenderTransform) -> dict[str, Any]:
    d = t.to_dict()
    for axis in ("x", "y"):
        d[axis]["slope"] = quantize(d[axis]["slope"])
        d[axis]["offset"] = quantize(d[axis]["offset"])
    return d


@functools.cache
def load_label_pools() -> dict[str, tuple[str, ...]]:
    text = resources.files("plotextract").joinpath("data/labels.json").read_text(encoding="utf-8")
    return {k: tuple(v) for k, v in json.loads(text).items()}


def _u(rng: np.random.Generator, lo: float, hi: float) -> float:
    return quantize(float(rng.uniform(lo, hi)))


def _pick(rng: np.random.Generator, pool) -> Any:
    return pool[int(rng.integers(len(pool)))]


def _pick_many(rng: np.random.Generator, pool, k: int) -> list:
    return [pool[int(i)] for i in rng.choice(len(pool), size=k, replace=False)]


def sample_plot_spec(rng: np.random.Generator, config: SynthConfig | None = None) -> PlotSpec:
    """Draw one extractable PlotSpec from ``rng``."""
    cfg = config or SynthConfig()
    pools = load_label_pools()
    n = int(rng.integers(cfg.series_count[0], cfg.series_count[1] + 1))

    width = int(rng.integers(cfg.width[0], cfg.width[1] + 1))
    height = int(min(2400, max(320, round(width * _u(rng, *cfg.aspect)))))
    show_legend = n > 1 or bool(rng.random() < 0.3)
    style = StyleSpec(
        plot_type=_pick(rng, PLOT_TYPES),
        colors=tuple(_pick_many(rng, _PALETTE, n)),
        markers=tuple(_pick_many(rng, _MARKERS, n)),
        marker_sizes=tuple(_u(rng, 3.0, 10.0) for _ in range(n)),
        line_widths=tuple(_u(rng, 0.8, 3.0) for _ in range(n)),
        line_styles=tuple(_pick(rng, _LINE_STYLES) for _ in range(n)),
        font=_pick(rng, FONT_TOKENS),
        font_size=float(round(_u(rng, *cfg.font_size), 1)),
        show_grid=bool(rng.random() < 0.5),
        show_top_right_axes=bool(rng.random() < 0.5),
        width=width,
        height=height,
        show_legend=show_legend,
    )

    x_log = bool(rng.random() < cfg.log_axis_probability)
    y_log = bool(rng.random() < cfg.log_axis_probability)
    x_prop, y_prop = _pick_many(rng, pools["properties"], 2)
    x_axis = AxisSpec(x_prop, _pick(rng, pools["units"]), "log" if x_log else "linear")
    y_axis = AxisSpec(y_prop, _pick(rng, pools["units"]), "log" if y_log else "linear")

    if x_log:
        lo = float(rng.integers(-3, 3)) + _u(rng, 0.0, 0.5)
        x_range = (quantize(lo), quantize(lo + rng.integers(cfg.log_decades[0], cfg.log_decades[1] + 1)))
    else:
        span = quantize(10.0 ** int(rng.integers(cfg.linear_magnitude[0], cfg.linear_magnitude[1] + 1)) * _u(rng, 1.0, 10.0))
        start = 0.0 if rng.random() < 0.3 else quantize(_u(rng, -1.0, 1.0) * span)
        x_range = (start, quantize(start + span))

    if y_log:
        y_base = float(rng.integers(-2, 4))
    else:
        y_mag = 10.0 ** int(rng.integers(cfg.linear_magnitude[0], cfg.linear_magnitude[1] + 1))

    names = _pick_many(rng, pools["series_names"], n) if show_legend else [""] * n
    gens = []
    for i in range(n):
        if y_log:
            y_offset = quantize(y_base + _u(rng, 0.0, 1.0))
            y_scale = quantize(_u(rng, 1.0, 3.0) * (1 if rng.random() < 0.5 else -1))
        else:
            y_scale = quantize(y_mag * _u(rng, 1.0, 10.0) * (1 if rng.random() < 0.5 else -1))
            y_offset = quantize(y_mag * _u(rng, -5.0, 5.0))
        gens.append(
            SeriesGen(
                name=names[i],
                kind=_pick(rng, FUNCTION_KINDS),
                n_points=int(rng.integers(cfg.points_per_series[0], cfg.points_per_series[1] + 1)),
                spacing=_pick(rng, SPACINGS),
                noise=_u(rng, 0.0, cfg.max_noise),
                y_offset=y_offset,
                y_scale=y_scale,
                x_range=x_range,
                x_log=x_log,
                y_log=y_log,
                freq=_u(rng, 0.3, 2.0),
                phase=_u(rng, 0.0, 2 * math.pi),
                center=_u(rng, 0.2, 0.8),
                width=_u(rng, 0.08, 0.3),
                seed=int(rng.integers(2**31)),
            )
        )
    return PlotSpec(style=style, series=tuple(gens), x_axis=x_axis, y_axis=y_axis)


def base_curve(gen: SeriesGen, t: np.ndarray) -> np.ndarray:
    """Normalized base function of the position t in [0, 1] along the x-range."""
    if gen.kind == "sine":
        return (np.sin(2 * np.pi * gen.freq * t + gen.phase) + 1) / 2
    if gen.kind == "log":
        lo, hi = math.log(_LOG_SHIFT), math.log(1 + _LOG_SHIFT)
        return (np.log(t + _LOG_SHIFT) - lo) / (hi - lo)
    if gen.kind == "linear":
        return t
    if gen.kind == "gaussian":
        return np.exp(-((t - gen.center) ** 2) / (2 * gen.width**2))
    raise ValueError(f"unknown function kind {gen.kind!r}")


def synthesize_series(gen: SeriesGen, rng: np.random.Generator) -> Series:
    """Evaluate the scaled base function on a sampled x-grid and add uniform noise.

    The noise amplitude is ``gen.noise`` times the y-range of the noiseless
    points.
    """
    if gen.spacing == "uniform":
        t = np.linspace(0.0, 1.0, gen.n_points)
    else:
        t = np.sort(rng.uniform(0.0, 1.0, gen.n_points))
    lo, hi = gen.x_range
    x = lo + (hi - lo) * t
    if gen.x_log:
        x = 10.0**x
    base = gen.y_offset + gen.y_scale * base_curve(gen, t)
    spread = float(base.max() - base.min())
    y = base + rng.uniform(-1.0, 1.0, gen.n_points) * gen.noise * spread
    if gen.y_log:
        y = 10.0**y
    return Series(gen.name, tuple(Point(quantize(float(a)), quantize(float(b))) for a, b in zip(x, y)))


def build_truth(spec: PlotSpec) -> PlotData:
    series = tuple(synthesize_series(g, np.random.default_rng(g.seed)) for g in spec.series)
    return canonicalize(PlotData(spec.x_axis, spec.y_axis, series))


def corrupt(spec: PlotSpec, rng: np.random.Generator) -> PlotSpec:
    """Apply one randomly chosen corruption that makes accurate reading impossible."""
    kind = _pick(rng, CORRUPTIONS)
    style = spec.style
    series = spec.series
    if kind == "remove_axis_labels":
        style = replace(style, show_axis_labels=False)
    elif kind == "remove_tick_labels":
        style = replace(style, tick_labels="hidden")
    elif kind == "nonconsecutive_ticks":
        style = replace(style, tick_labels="nonconsecutive", tick_seed=int(rng.integers(2**31)))
    elif kind == "shuffled_ticks":
        style = replace(style, tick_labels="shuffled", tick_seed=int(rng.integers(2**31)))
    else:
        # the second series is an exact copy of the first and hides it completely
        first = series[0]
        if len(series) >= 2:
            series = (first, replace(first, name=series[1].name)) + series[2:]
        else:
            pools = load_label_pools()
            names = [n for n in pools["series_names"] if n != first.name]
            series = (replace(first, name=first.name or _pick(rng, names)), replace(first, name=_pick(rng, names)))
            while series[1].name == series[0].name:
                series = (series[0], replace(first, name=_pick(rng, names)))
            extra = [c for c in _PALETTE if c != style.colors[0]]
            style = replace(
                style,
                colors=style.colors + (_pick(rng, extra),),
                markers=style.markers + style.markers[:1],
                marker_sizes=style.marker_sizes + style.marker_sizes[:1],
                line_widths=style.line_widths + style.line_widths[:1],
                line_styles=style.line_styles + style.line_styles[:1],
                show_legend=True,
            )
    return replace(spec, style=style, series=series, extractable=False, corruption=kind)


def _render_job(spec: PlotSpec) -> tuple[PlotData, bytes, RenderTransform]:
    truth = build_truth(spec)
    return truth, render_plot(truth, spec.style), render_transform(truth, spec.style)


def corrupt_count(n_plots: int, corrupt_fraction: float) -> int:
    return int(math.floor(n_plots * corrupt_fraction + 0.5))


def generate_dataset(
    seed: int,
    n_plots: int = 100,
    corrupt_fraction: float = 0.10,
    out_dir: str | Path = "bench",
    config: SynthConfig | None = None,
    workers: int = 1,
) -> BenchmarkManifest:
    """Sample, corrupt, render and write a benchmark; returns the manifest.

    Layout: ``<out>/<id>/plot.png``, ``truth.json``, ``truth.csv`` and
    ``<out>/manifest.json``.
    """
    if n_plots < 1:
        raise ValueError("n_plots must be at least 1")
    if not 0 <= corrupt_fraction < 1:
        raise ValueError("corrupt_fraction must be in [0, 1)")
    rng = np.random.default_rng(seed)
    specs = [sample_plot_spec(rng, config) for _ in range(n_plots)]
    k = corrupt_count(n_plots, corrupt_fraction)
    for i in sorted(int(v) for v in rng.choice(n_plots, size=k, replace=False)):
        specs[i] = corrupt(specs[i], rng)

    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rendered = list(pool.map(_render_job, specs))
    else:
        rendered = [_render_job(s) for s in specs]

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(3, len(str(n_plots - 1)))
    entries = []
    for i, (spec, (truth, png, transform)) in enumerate(zip(specs, rendered)):
        pid = f"plot_{i:0{width}d}"
        d = out / pid
        d.mkdir(exist_ok=True)
        (d / "plot.png").write_bytes(png)
        (d / "truth.json").write_text(dumps(truth), encoding="utf-8")
        (d / "truth.csv").write_text(to_csv(truth), encoding="utf-8", newline="")
        entries.append(ManifestEntry(pid, spec, truth, f"{pid}/plot.png", spec.extractable, transform))

    manifest = BenchmarkManifest(seed, n_plots, corrupt_fraction, tuple(entries))
    text = json.dumps(manifest.to_dict(), indent=2, ensure_ascii=False) + "\n"
    (out / "manifest.json").write_text(text, encoding="utf-8", newline="")
    return replace(manifest, digest=hashlib.sha256(text.encode("utf-8")).hexdigest())


def load_manifest(path: str | Path) -> dict[str, Any]:
    return json.loads(Path(path).read_text(encoding="utf-8"))
