"""SVG figures: waterfall, summary (beeswarm-style), ROC and reliability diagram.

Documents are built with ``xml.etree`` and serialized without any
timestamps or random ids, so identical inputs give identical bytes.  Elements
are tagged through ``class`` and ``<title>`` only.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path

import numpy as np

from riskstrat.errors import RenderError
from riskstrat.explain import Attribution, GlobalImportance, waterfall
from riskstrat.fileio import atomic_write
from riskstrat.metrics import CalibrationCurve, RocCurve

SVG_NS = "http://www.w3.org/2000/svg"
KINDS = ("waterfall", "summary", "roc", "calibration")
POSITIVE = "#d62728"
NEGATIVE = "#1f77b4"
LOW = (31, 90, 220)
HIGH = (220, 30, 40)

ET.register_namespace("", SVG_NS)


def fmt2(x) -> str:
    """Two-decimal label, rounding half to even on the shortest decimal repr."""
    x = float(x)
    if not math.isfinite(x):
        return str(x)
    q = Decimal(repr(x)).quantize(Decimal("0.01"), rounding=ROUND_HALF_EVEN)
    if q == 0:
        q = abs(q)  # no "-0.00"
    return f"{q:.2f}"


def _c(v: float) -> str:
    # pixel coordinates
    s = f"{v:.2f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


@dataclass(frozen=True)
class FigureSpec:
    kind: str
    width: int = 900
    height: int = 600
    title: str = ""
    x_label: str = ""
    y_label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RenderError(f"unknown figure kind {self.kind!r}")
        if not (self.width > 0 and self.height > 0):
            raise RenderError("figure dimensions must be positive")


DEFAULT_LABELS = {
    "waterfall": ("Local explanation", "Contribution to predicted probability", ""),
    "summary": ("Global feature attribution", "SHAP value (probability)", ""),
    "roc": ("ROC curve (out-of-fold)", "False positive rate", "True positive rate"),
    "calibration": ("Calibration (out-of-fold)", "Mean predicted probability", "Observed frequency"),
}


def default_spec(kind: str) -> FigureSpec:
    title, xl, yl = DEFAULT_LABELS[kind]
    return FigureSpec(kind, title=title, x_label=xl, y_label=yl)


class _Canvas:
    """Plot area with a linear data-to-pixel map; y grows upward in data space."""

    def __init__(self, spec: FigureSpec, xlim, ylim, left=90, right=30, top=50, bottom=60):
        self.spec = spec
        self.root = ET.Element(
            f"{{{SVG_NS}}}svg",
            {
                "version": "1.1",
                "width": str(spec.width),
                "height": str(spec.height),
                "viewBox": f"0 0 {spec.width} {spec.height}",
                "font-family": "sans-serif",
                "font-size": "12",
            },
        )
        ET.SubElement(self.root, "title").text = spec.title or spec.kind
        ET.SubElement(self.root, "rect", {"class": "background", "x": "0", "y": "0",
                                          "width": str(spec.width), "height": str(spec.height), "fill": "white"})
        self.x0, self.x1 = left, max(left + 1, spec.width - right)
        self.y0, self.y1 = top, max(top + 1, spec.height - bottom)
        self.xlim = self._span(xlim)
        self.ylim = self._span(ylim)
        if spec.title:
            self.text(spec.width / 2, top / 2 + 6, spec.title, cls="figure-title", anchor="middle", size=16)

    @staticmethod
    def _span(lim):
        lo, hi = float(lim[0]), float(lim[1])
        if not hi > lo:
            lo, hi = lo - 0.5, hi + 0.5
        return lo, hi

    def px(self, x):
        lo, hi = self.xlim
        return self.x0 + (float(x) - lo) / (hi - lo) * (self.x1 - self.x0)

    def py(self, y):
        lo, hi = self.ylim
        return self.y1 - (float(y) - lo) / (hi - lo) * (self.y1 - self.y0)

    def group(self, cls, parent=None):
        return ET.SubElement(self.root if parent is None else parent, "g", {"class": cls})

    def text(self, x, y, s, cls="label", anchor="start", size=None, parent=None):
        attrs = {"class": cls, "x": _c(x), "y": _c(y), "text-anchor": anchor}
        if size:
            attrs["font-size"] = str(size)
        el = ET.SubElement(self.root if parent is None else parent, "text", attrs)
        el.text = s
        return el

    def line(self, x1, y1, x2, y2, cls, parent=None, **style):
        attrs = {"class": cls, "x1": _c(x1), "y1": _c(y1), "x2": _c(x2), "y2": _c(y2), "stroke": "black"}
        attrs.update({k.replace("_", "-"): str(v) for k, v in style.items()})
        return ET.SubElement(self.root if parent is None else parent, "line", attrs)

    def x_axis(self, ticks, label):
        g = self.group("axis x-axis")
        self.line(self.x0, self.y1, self.x1, self.y1, "axis-line", g)
        for t in ticks:
            x = self.px(t)
            self.line(x, self.y1, x, self.y1 + 5, "tick", g)
            self.text(x, self.y1 + 18, fmt2(t), "tick-label", "middle", parent=g)
        if label:
            self.text((self.x0 + self.x1) / 2, self.y1 + 42, label, "axis-label", "middle", parent=g)

    def y_axis(self, ticks, label):
        g = self.group("axis y-axis")
        self.line(self.x0, self.y0, self.x0, self.y1, "axis-line", g)
        for t in ticks:
            y = self.py(t)
            self.line(self.x0 - 5, y, self.x0, y, "tick", g)
            self.text(self.x0 - 8, y + 4, fmt2(t), "tick-label", "end", parent=g)
        if label:
            el = self.text(20, (self.y0 + self.y1) / 2, label, "axis-label", "middle", parent=g)
            el.set("transform", f"rotate(-90 20 {_c((self.y0 + self.y1) / 2)})")

    def tostring(self) -> str:
        ET.indent(self.root)
        return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(self.root, encoding="unicode") + "\n"


def _nice_ticks(lo, hi, count=5):
    if not hi > lo:
        return [lo]
    raw = (hi - lo) / count
    mag = 10 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9)
    ticks = []
    k = first
    while k * step <= hi + 1e-9 * step:
        ticks.append(round(k * step, 12))
        k += 1
    return ticks


UNIT_TICKS = [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]


def _check(spec, kind):
    spec = spec or default_spec(kind)
    if spec.kind != kind:
        raise RenderError(f"figure spec is for {spec.kind}, not {kind}")
    return spec


def render_waterfall(attribution: Attribution, spec: FigureSpec | None = None) -> str:
    """Horizontal bars from the base value to the prediction, largest |phi| on top."""
    spec = _check(spec, "waterfall")
    steps = waterfall(attribution)
    base, pred = attribution.base_value, attribution.prediction
    ends = [base, pred, *(s.start for s in steps), *(s.end for s in steps)]
    lo, hi = min(ends), max(ends)
    pad = 0.1 * (hi - lo) if hi > lo else 0.05
    cv = _Canvas(spec, (lo - pad, hi + pad), (0, max(1, len(steps))), left=200, top=75, bottom=70)
    cv.x_axis(_nice_ticks(lo - pad, hi + pad), spec.x_label)

    row_h = (cv.y1 - cv.y0) / max(1, len(steps))
    bars = cv.group("bars")
    for k, s in enumerate(steps):
        y = cv.y0 + k * row_h
        xa, xb = sorted((cv.px(s.start), cv.px(s.end)))
        positive = s.phi >= 0
        g = cv.group("bar " + ("positive" if positive else "negative"), bars)
        ET.SubElement(g, "title").text = f"{s.feature} = {_value_text(s.value)}: {fmt2(s.phi)}"
        ET.SubElement(g, "rect", {
            "x": _c(xa), "y": _c(y + 0.2 * row_h), "width": _c(xb - xa), "height": _c(0.6 * row_h),
            "fill": POSITIVE if positive else NEGATIVE,
        })
        cv.text(cv.x0 - 10, y + 0.5 * row_h + 4, f"{s.feature} = {_value_text(s.value)}", "feature-label", "end", parent=g)
        sign = "+" if positive else "-"
        cv.text(xb + 4, y + 0.5 * row_h + 4, sign + fmt2(abs(s.phi)), "phi-label", parent=g)

    markers = cv.group("markers")
    for cls, x, label in (("marker base", base, "E[f(X)]"), ("marker final", pred, "f(x)")):
        g = cv.group(cls, markers)
        ET.SubElement(g, "title").text = f"{label} = {fmt2(x)}"
        cv.line(cv.px(x), cv.y0 - 6, cv.px(x), cv.y1, "marker-line", g, stroke_dasharray="4 3")
        cv.text(cv.px(x), cv.y0 - 10 if cls == "marker base" else cv.y1 + 58,
                f"{label} = {fmt2(x)}", "marker-label", "middle", parent=g)
    return cv.tostring()


def _value_text(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else fmt2(v)


def _color(t: float) -> str:
    t = min(1.0, max(0.0, t))
    r, g, b = (round(a + (c - a) * t) for a, c in zip(LOW, HIGH))
    return f"#{r:02x}{g:02x}{b:02x}"


def render_summary(importance: GlobalImportance, spec: FigureSpec | None = None, seed: int = 0) -> str:
    """One row per feature (descending mean |phi|), one dot per instance at x = phi.

    Dot colour runs from blue (feature minimum) to red (maximum) within each
    feature; vertical jitter comes from a seeded generator.
    """
    spec = _check(spec, "summary")
    phi, values = importance.phi, importance.values
    if phi.size == 0:
        raise RenderError("summary plot needs at least one instance")
    names = list(importance.feature_names)
    order = [names.index(f) for f in importance.ranking()]
    lo, hi = float(phi.min()), float(phi.max())
    lo, hi = min(lo, 0.0), max(hi, 0.0)
    pad = 0.05 * (hi - lo) if hi > lo else 0.05
    cv = _Canvas(spec, (lo - pad, hi + pad), (0, len(order)), left=130)
    cv.x_axis(_nice_ticks(lo - pad, hi + pad), spec.x_label)
    cv.line(cv.px(0), cv.y0, cv.px(0), cv.y1, "zero-line", stroke="#999999")

    rng = np.random.default_rng(seed)
    row_h = (cv.y1 - cv.y0) / len(order)
    for k, j in enumerate(order):
        g = cv.group("feature-row")
        ET.SubElement(g, "title").text = f"{names[j]}: mean |phi| = {fmt2(importance.importance[j])}"
        mid = cv.y0 + (k + 0.5) * row_h
        cv.text(cv.x0 - 10, mid + 4, names[j], "feature-label", "end", parent=g)
        v = values[:, j]
        vmin, vmax = float(np.min(v)), float(np.max(v))
        jitter = rng.uniform(-0.3, 0.3, size=phi.shape[0]) * row_h
        dots = ET.SubElement(g, "g", {"class": "dots"})
        for r in range(phi.shape[0]):
            t = 0.5 if vmax == vmin else (float(v[r]) - vmin) / (vmax - vmin)
            ET.SubElement(dots, "circle", {
                "class": "dot", "cx": _c(cv.px(phi[r, j])), "cy": _c(mid + jitter[r]), "r": "2.5",
                "fill": _color(t), "fill-opacity": "0.7",
            })
    legend = cv.group("legend")
    cv.text(cv.x1, cv.y1 + 42, "feature value: low", "legend-label", "end", parent=legend).set("fill", _color(0.0))
    cv.text(cv.x1, cv.y1 + 56, "feature value: high", "legend-label", "end", parent=legend).set("fill", _color(1.0))
    return cv.tostring()


def render_roc(roc: RocCurve, spec: FigureSpec | None = None) -> str:
    spec = _check(spec, "roc")
    cv = _Canvas(spec, (0, 1), (0, 1))
    cv.x_axis(UNIT_TICKS, spec.x_label)
    cv.y_axis(UNIT_TICKS, spec.y_label)
    cv.line(cv.px(0), cv.py(0), cv.px(1), cv.py(1), "chance", stroke="#888888", stroke_dasharray="6 4")
    pts = " ".join(f"{_c(cv.px(x))},{_c(cv.py(y))}" for x, y in roc.points)
    ET.SubElement(cv.root, "polyline", {"class": "roc-curve", "points": pts, "fill": "none",
                                        "stroke": POSITIVE, "stroke-width": "2"})
    cv.text(cv.px(0.6), cv.py(0.15), f"AUC = {fmt2(roc.auc)}", "auc-label", size=16)
    return cv.tostring()


def render_calibration(curve: CalibrationCurve, spec: FigureSpec | None = None, annotate_counts: bool = True) -> str:
    spec = _check(spec, "calibration")
    cv = _Canvas(spec, (0, 1), (0, 1))
    cv.x_axis(UNIT_TICKS, spec.x_label)
    cv.y_axis(UNIT_TICKS, spec.y_label)
    cv.line(cv.px(0), cv.py(0), cv.px(1), cv.py(1), "perfect-calibration", stroke="#888888", stroke_dasharray="6 4")
    if curve.bins:
        pts = " ".join(f"{_c(cv.px(b.mean_predicted))},{_c(cv.py(b.observed_frequency))}" for b in curve.bins)
        ET.SubElement(cv.root, "polyline", {"class": "calibration-curve", "points": pts, "fill": "none",
                                            "stroke": NEGATIVE, "stroke-width": "2"})
    g = cv.group("bins")
    for b in curve.bins:
        x, y = cv.px(b.mean_predicted), cv.py(b.observed_frequency)
        pt = ET.SubElement(g, "circle", {"class": "calibration-point", "cx": _c(x), "cy": _c(y), "r": "4", "fill": NEGATIVE})
        ET.SubElement(pt, "title").text = (
            f"[{fmt2(b.lower)}, {fmt2(b.upper)}]: predicted {fmt2(b.mean_predicted)}, "
            f"observed {fmt2(b.observed_frequency)}, n = {b.count}"
        )
        if annotate_counts:
            cv.text(x + 6, y - 6, f"n={b.count}", "count-label", size=10, parent=g)
    return cv.tostring()


RENDERERS = {
    "waterfall": render_waterfall,
    "summary": render_summary,
    "roc": render_roc,
    "calibration": render_calibration,
}


def figure_path(out_dir, run_id: str, kind: str) -> Path:
    if kind not in KINDS:
        raise RenderError(f"unknown figure kind {kind!r}")
    return Path(out_dir) / f"{run_id}_{kind}.svg"


def write_figure(svg: str, out_dir, run_id: str, kind: str) -> Path:
    return atomic_write(figure_path(out_dir, run_id, kind), svg)
