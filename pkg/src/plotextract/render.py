"""Deterministic raster rendering of PlotData.

Figures are laid out by hand (fixed pixel margins, explicit limits and tick
positions) so the data-to-pixel mapping is plain arithmetic that does not
depend on the plotting library's auto-layout. Text always uses fonts shipped
inside matplotlib, never system fonts.
"""

from __future__ import annotations

import io
import math
import threading
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any

import matplotlib
import numpy as np
from matplotlib.backends.backend_agg import FigureCanvasAgg
from matplotlib.figure import Figure
from matplotlib.font_manager import FontProperties
from matplotlib.ticker import MaxNLocator

from .model import PlotData, validate_plot_data

PLOT_TYPES = ("points", "lines", "lines_points")
TICK_LABEL_MODES = ("normal", "hidden", "nonconsecutive", "shuffled")
MIN_PX, MAX_PX = 320, 2400
DPI = 100
PAD_FRACTION = 0.05

_FONT_FILES = {
    "sans": ("DejaVuSans.ttf", "dejavusans"),
    "serif": ("DejaVuSerif.ttf", "dejavuserif"),
    "mono": ("DejaVuSansMono.ttf", "dejavusans"),
    "stix": ("STIXGeneral.ttf", "stix"),
}
FONT_TOKENS = tuple(_FONT_FILES)

# matplotlib's Agg text and font caches are not documented as thread-safe
_RENDER_LOCK = threading.Lock()


class StyleError(ValueError):
    pass


@dataclass(frozen=True)
class StyleSpec:
    colors: tuple[str, ...]
    markers: tuple[str, ...]
    marker_sizes: tuple[float, ...]
    line_widths: tuple[float, ...]
    line_styles: tuple[str, ...]
    plot_type: str = "lines_points"
    font: str = "sans"
    font_size: float = 11.0
    show_grid: bool = False
    show_top_right_axes: bool = True
    width: int = 800
    height: int = 600
    show_legend: bool = True
    show_axis_labels: bool = True
    tick_labels: str = "normal"
    tick_seed: int = 0

    @classmethod
    def default(cls, n_series: int, **overrides) -> StyleSpec:
        palette = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#17becf")
        markers = ("o", "s", "^", "D", "v", "x")
        base = dict(
            colors=tuple(palette[i % len(palette)] for i in range(n_series)),
            markers=tuple(markers[i % len(markers)] for i in range(n_series)),
            marker_sizes=(6.0,) * n_series,
            line_widths=(1.5,) * n_series,
            line_styles=("-",) * n_series,
        )
        base.update(overrides)
        return cls(**base)

    def to_dict(self) -> dict[str, Any]:
        d = asdict(self)
        for key in ("colors", "markers", "marker_sizes", "line_widths", "line_styles"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> StyleSpec:
        d = dict(d)
        for key in ("colors", "markers", "marker_sizes", "line_widths", "line_styles"):
            d[key] = tuple(d[key])
        return cls(**d)


def check_style(style: StyleSpec, n_series: int) -> None:
    problems = []
    if not (MIN_PX <= style.width <= MAX_PX and MIN_PX <= style.height <= MAX_PX):
        problems.append(f"image size {style.width}x{style.height} outside [{MIN_PX}, {MAX_PX}] px")
    if style.plot_type not in PLOT_TYPES:
        problems.append(f"unknown plot type {style.plot_type!r}")
    if style.font not in _FONT_FILES:
        problems.append(f"unknown font token {style.font!r}")
    if style.tick_labels not in TICK_LABEL_MODES:
        problems.append(f"unknown tick label mode {style.tick_labels!r}")
    for key in ("colors", "markers", "marker_sizes", "line_widths", "line_styles"):
        if len(getattr(style, key)) != n_series:
            problems.append(f"{key} has {len(getattr(style, key))} entries for {n_series} series")
    if problems:
        raise StyleError("; ".join(problems))


@dataclass(frozen=True)
class AxisTransform:
    """pixel = slope * t(value) + offset, with t = identity or log10."""

    scale: str
    slope: float
    offset: float

    def forward(self, v: float) -> float:
        t = math.log10(v) if self.scale == "log" else v
        return self.slope * t + self.offset

    def inverse(self, px: float) -> float:
        t = (px - self.offset) / self.slope
        return 10.0**t if self.scale == "log" else t


@dataclass(frozen=True)
class RenderTransform:
    """Maps data coordinates to continuous image coordinates.

    Image coordinates have their origin at the top-left corner of the PNG,
    x to the right and y downward; pixel (col, row) has its centre at
    (col + 0.5, row + 0.5).
    """

    width: int
    height: int
    x: AxisTransform
    y: AxisTransform

    def data_to_pixel(self, x: float, y: float) -> tuple[float, float]:
        return self.x.forward(x), self.y.forward(y)

    def pixel_to_data(self, px: float, py: float) -> tuple[float, float]:
        return self.x.inverse(px), self.y.inverse(py)

    def to_dict(self) -> dict[str, Any]:
        return {
            "width": self.width,
            "height": self.height,
            "x": {"scale": self.x.scale, "slope": self.x.slope, "offset": self.x.offset},
            "y": {"scale": self.y.scale, "slope": self.y.slope, "offset": self.y.offset},
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> RenderTransform:
        return cls(d["width"], d["height"], AxisTransform(**d["x"]), AxisTransform(**d["y"]))


@dataclass(frozen=True)
class _Layout:
    left: int
    right: int
    bottom: int
    top: int
    x_lim: tuple[float, float]  # in transformed (log10 for log axes) space
    y_lim: tuple[float, float]
    x_ticks: tuple[float, ...]  # data space
    y_ticks: tuple[float, ...]
    x_labels: tuple[str, ...]
    y_labels: tuple[str, ...]


def _font_path(token: str) -> str:
    return str(Path(matplotlib.get_data_path()) / "fonts" / "ttf" / _FONT_FILES[token][0])


def _limits(values: list[float], scale: str) -> tuple[float, float]:
    t = [math.log10(v) for v in values] if scale == "log" else list(values)
    lo, hi = min(t), max(t)
    span = hi - lo
    if span == 0:
        span = abs(lo) * 0.2 if lo else 1.0
        if scale == "log":
            span = 1.0
    return lo - PAD_FRACTION * span, hi + PAD_FRACTION * span


def _format_linear(values: list[float]) -> list[str]:
    if len(values) < 2:
        return [f"{v:g}" for v in values]
    step = min(abs(b - a) for a, b in zip(values, values[1:]))
    biggest = max(abs(v) for v in values)
    if biggest >= 1e5 or biggest < 1e-3:
        digits = max(1, int(math.ceil(math.log10(biggest / step))) + 1) if step else 3
        out = [f"{v:.{digits}g}" for v in values]
    else:
        decimals = max(0, -int(math.floor(math.log10(step) + 1e-9)))
        if abs(step * 10**decimals - round(step * 10**decimals)) > 1e-6:
            decimals += 1
        out = [f"{v:.{decimals}f}" for v in values]
    return ["0" if s.strip("-0.") == "" else s for s in out]


def _ticks(lim: tuple[float, float], scale: str, axis_px: float, px_per_tick: float) -> tuple[list[float], list[str]]:
    lo, hi = lim
    if scale == "log":
        decades = range(math.ceil(lo - 1e-12), math.floor(hi + 1e-12) + 1)
        return [10.0**k for k in decades], [f"$10^{{{k}}}$" for k in decades]
    nbins = max(4, min(9, int(axis_px // px_per_tick)))
    eps = (hi - lo) * 1e-9
    ticks = [float(v) for v in MaxNLocator(nbins=nbins, steps=[1, 2, 2.5, 5, 10]).tick_values(lo, hi) if lo - eps <= v <= hi + eps]
    # snap float noise such as 0.30000000000000004 to the tick step grid
    ticks = [0.0 if abs(v) < eps else v for v in ticks]
    return ticks, _format_linear(ticks)


def _corrupt_labels(labels: list[str], ticks: list[float], mode: str, rng: np.random.Generator, scale: str) -> list[str]:
    if mode == "normal":
        return labels
    if mode == "hidden":
        return [""] * len(labels)
    if len(labels) < 2:
        return [""] * len(labels)
    if mode == "shuffled":
        order = list(rng.permutation(len(labels)))
        if order == sorted(order):
            order = order[1:] + order[:1]
        return [labels[i] for i in order]
    # nonconsecutive: increasing labels whose gaps no longer match the tick spacing
    gaps = rng.integers(1, 4, size=len(labels) - 1)
    if len(set(gaps.tolist())) == 1:
        gaps[-1] = gaps[-1] % 3 + 1
    if scale == "log":
        k0 = round(math.log10(ticks[0]))
        ks = [k0] + list(k0 + np.cumsum(gaps))
        return [f"$10^{{{int(k)}}}$" for k in ks]
    step = ticks[1] - ticks[0]
    vals = [ticks[0]] + list(ticks[0] + step * np.cumsum(gaps))
    return _format_linear([float(v) for v in vals])


def _layout(data: PlotData, style: StyleSpec) -> _Layout:
    font_px = style.font_size * DPI / 72.0
    xs = [p.x for p in data.all_points()]
    ys = [p.y for p in data.all_points()]
    x_lim = _limits(xs, data.x_axis.scale)
    y_lim = _limits(ys, data.y_axis.scale)
    rough_w = style.width * 0.8
    rough_h = style.height * 0.75
    x_ticks, x_labels = _ticks(x_lim, data.x_axis.scale, rough_w, font_px * 5)
    y_ticks, y_labels = _ticks(y_lim, data.y_axis.scale, rough_h, font_px * 2.5)
    rng = np.random.default_rng(style.tick_seed)
    x_labels = _corrupt_labels(x_labels, x_ticks, style.tick_labels, rng, data.x_axis.scale)
    y_labels = _corrupt_labels(y_labels, y_ticks, style.tick_labels, rng, data.y_axis.scale)

    widest = max((len(s) for s in y_labels), default=1)
    if data.y_axis.scale == "log":
        widest = 4
    left = int(round(font_px * (0.62 * widest + 2.4) + 12))
    bottom = int(round(font_px * 3.0 + 12))
    top = int(round(font_px * (2.2 if data.title else 0.9) + 10))
    right = int(round(font_px * 1.5 + 0.02 * style.width))
    return _Layout(left, right, bottom, top, x_lim, y_lim, tuple(x_ticks), tuple(y_ticks), tuple(x_labels), tuple(y_labels))


def _transform(lay: _Layout, data: PlotData, style: StyleSpec) -> RenderTransform:
    W, H = style.width, style.height
    aw = W - lay.left - lay.right
    ah = H - lay.bottom - lay.top
    sx = aw / (lay.x_lim[1] - lay.x_lim[0])
    sy = ah / (lay.y_lim[1] - lay.y_lim[0])
    x_axis = AxisTransform(data.x_axis.scale, sx, lay.left - sx * lay.x_lim[0])
    # image rows grow downward from the top edge
    y_axis = AxisTransform(data.y_axis.scale, -sy, (H - lay.bottom) + sy * lay.y_lim[0])
    return RenderTransform(W, H, x_axis, y_axis)


def render_transform(data: PlotData, style: StyleSpec) -> RenderTransform:
    """The data-to-pixel mapping ``render_plot`` will use for these inputs."""
    check_style(style, len(data.series))
    return _transform(_layout(data, style), data, style)


def axis_title(label: str, unit: str) -> str:
    return f"{label} ({unit})" if unit else label


def build_figure(data: PlotData, style: StyleSpec) -> Figure:
    """Lay out the figure without rasterising it (exposed for inspection in tests)."""
    violations = validate_plot_data(data)
    if violations:
        raise StyleError(f"cannot render invalid plot data: {violations[0]}")
    check_style(style, len(data.series))
    lay = _layout(data, style)
    W, H = style.width, style.height
    fp = FontProperties(fname=_font_path(style.font), size=style.font_size)

    # a hair over W/DPI so Agg's integer truncation yields exactly W pixels
    fig = Figure(figsize=(W / DPI + 1e-9, H / DPI + 1e-9), dpi=DPI)
    FigureCanvasAgg(fig)
    ax = fig.add_axes([lay.left / W, lay.bottom / H, (W - lay.left - lay.right) / W, (H - lay.bottom - lay.top) / H])
    ax.set_xscale(data.x_axis.scale)
    ax.set_yscale(data.y_axis.scale)

    for i, s in enumerate(data.series):
        kw: dict[str, Any] = {"color": style.colors[i], "label": s.name or None, "clip_on": True}
        if style.plot_type in ("points", "lines_points"):
            kw.update(marker=style.markers[i], markersize=style.marker_sizes[i])
        if style.plot_type == "points":
            kw.update(linestyle="none")
        else:
            kw.update(linestyle=style.line_styles[i], linewidth=style.line_widths[i])
        ax.plot(s.xs, s.ys, **kw)

    def lim(v: tuple[float, float], scale: str) -> tuple[float, float]:
        return (10.0 ** v[0], 10.0 ** v[1]) if scale == "log" else v

    ax.set_xlim(*lim(lay.x_lim, data.x_axis.scale))
    ax.set_ylim(*lim(lay.y_lim, data.y_axis.scale))
    ax.minorticks_off()
    ax.set_xticks(lay.x_ticks)
    ax.set_xticklabels(lay.x_labels, fontproperties=fp)
    ax.set_yticks(lay.y_ticks)
    ax.set_yticklabels(lay.y_labels, fontproperties=fp)
    if style.show_axis_labels:
        ax.set_xlabel(axis_title(data.x_axis.label, data.x_axis.unit), fontproperties=fp)
        ax.set_ylabel(axis_title(data.y_axis.label, data.y_axis.unit), fontproperties=fp)
    if data.title:
        ax.set_title(data.title, fontproperties=fp)
    ax.spines["top"].set_visible(style.show_top_right_axes)
    ax.spines["right"].set_visible(style.show_top_right_axes)
    if style.show_grid:
        ax.grid(True, color="#c8c8c8", linewidth=0.6)
        ax.set_axisbelow(True)
    if style.show_legend and any(s.name for s in data.series):
        ax.legend(prop=fp, loc="best", framealpha=0.9)
    return fig


def render_plot(data: PlotData, style: StyleSpec) -> bytes:
    """Render to PNG bytes; identical inputs give identical bytes on the same build."""
    with _RENDER_LOCK, matplotlib.rc_context():
        matplotlib.rcdefaults()
        matplotlib.rcParams["mathtext.fontset"] = _FONT_FILES.get(style.font, _FONT_FILES["sans"])[1]
        matplotlib.rcParams["svg.hashsalt"] = "plotextract"
        fig = build_figure(data, style)
        buf = io.BytesIO()
        fig.savefig(buf, format="png", dpi=DPI, metadata={"Software": None})
    return buf.getvalue()
