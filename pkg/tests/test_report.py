import xml.etree.ElementTree as ET

import numpy as np
import pytest

from riskstrat.errors import RenderError
from riskstrat.explain import Attribution, GlobalImportance, exact_shap, global_importance
from riskstrat.metrics import calibration_curve, roc_points
from riskstrat.report import (
    KINDS,
    NEGATIVE,
    POSITIVE,
    SVG_NS,
    FigureSpec,
    figure_path,
    fmt2,
    render_calibration,
    render_roc,
    render_summary,
    render_waterfall,
    write_figure,
)

NS = {"s": SVG_NS}


def parse(svg):
    root = ET.fromstring(svg.encode("utf-8"))
    assert root.tag == f"{{{SVG_NS}}}svg"
    assert root.get("version") == "1.1"
    vb = [float(v) for v in root.get("viewBox").split()]
    assert vb == [0, 0, float(root.get("width")), float(root.get("height"))]
    return root


def by_class(root, tag, cls):
    return [e for e in root.iter(f"{{{SVG_NS}}}{tag}") if cls in (e.get("class") or "").split()]


def texts(root, cls):
    return [e.text for e in by_class(root, "text", cls)]


def two_feature_attr(phi=(0.2, -0.1), base=0.3):
    phi = np.asarray(phi, dtype=float)
    return Attribution(("A", "B"), phi, base, base + float(phi.sum()), np.array([1.0, 2.5]))


# -- fmt2 ---------------------------------------------------------------------

@pytest.mark.parametrize("x, s", [
    (0.125, "0.12"), (0.135, "0.14"), (0.375, "0.38"), (2.5, "2.50"), (0.005, "0.00"), (0.015, "0.02"),
    (-0.004, "0.00"), (-0.125, "-0.12"), (1.0, "1.00"), (0.61, "0.61"),
])
def test_fmt2_half_even(x, s):
    assert fmt2(x) == s


# -- specs --------------------------------------------------------------------

def test_figure_spec_validation():
    assert FigureSpec("roc").width == 900 and FigureSpec("roc").height == 600
    with pytest.raises(RenderError):
        FigureSpec("pie")
    with pytest.raises(RenderError):
        FigureSpec("roc", width=0)
    with pytest.raises(RenderError):
        render_roc(roc_points([0.9, 0.1], [1, 0]), FigureSpec("calibration"))


def test_custom_dimensions():
    root = parse(render_roc(roc_points([0.9, 0.1], [1, 0]), FigureSpec("roc", 400, 300, "t")))
    assert root.get("viewBox") == "0 0 400 300"
    assert root.find("s:title", NS).text == "t"


# -- waterfall ----------------------------------------------------------------

def test_waterfall_bars_colors_and_markers():
    root = parse(render_waterfall(two_feature_attr()))
    pos, neg = by_class(root, "g", "positive"), by_class(root, "g", "negative")
    assert len(pos) == 1 and len(neg) == 1
    assert pos[0].find("s:rect", NS).get("fill") == POSITIVE
    assert neg[0].find("s:rect", NS).get("fill") == NEGATIVE
    assert texts(root, "marker-label") == ["E[f(X)] = 0.30", "f(x) = 0.40"]
    # largest |phi| drawn first (top)
    labels = texts(root, "feature-label")
    assert labels[0].startswith("A") and labels[1].startswith("B")


def test_waterfall_bar_count_and_all_zero():
    attr = Attribution(("A", "B", "C"), np.zeros(3), 0.25, 0.25, np.zeros(3))
    root = parse(render_waterfall(attr))
    bars = by_class(root, "g", "bar")
    assert len(bars) == 3
    assert all(float(b.find("s:rect", NS).get("width")) == 0 for b in bars)
    lines = [g.find("s:line", NS) for g in by_class(root, "g", "marker")]
    assert lines[0].get("x1") == lines[1].get("x1")


def test_waterfall_replica_efficiency_labels(replica_fit):
    cohort, _, model, background = replica_fit
    attr = exact_shap(model, cohort.values[0], background)
    root = parse(render_waterfall(attr))
    assert len(by_class(root, "g", "bar")) == 5
    assert texts(root, "marker-label")[1] == f"f(x) = {fmt2(attr.prediction)}"


# -- summary ------------------------------------------------------------------

def test_summary_single_dot():
    gi = GlobalImportance(("A",), np.array([0.07]), np.array([[0.07]]), np.array([[3.0]]), 0.2)
    root = parse(render_summary(gi))
    dots = by_class(root, "circle", "dot")
    assert len(dots) == 1


def test_summary_rows_dots_and_colors(replica_fit):
    cohort, _, model, background = replica_fit
    gi = global_importance(model, cohort.values[:40], background)
    root = parse(render_summary(gi))
    rows = by_class(root, "g", "feature-row")
    names = [r.find("s:text", NS).text for r in rows]
    assert names == gi.ranking()
    assert names[0] in ("RIDAGEYR", "INDFMPIR")
    assert len(by_class(root, "circle", "dot")) == 40 * 5
    # the age row: oldest child drawn red-most, youngest blue-most
    age_row = rows[names.index("RIDAGEYR")]
    fills = [d.get("fill") for d in age_row.iter(f"{{{SVG_NS}}}circle")]
    ages = gi.values[:, 0]
    assert fills[int(np.argmax(ages))] == "#dc1e28"
    assert fills[int(np.argmin(ages))] == "#1f5adc"


def test_summary_seeded_jitter(replica_fit):
    cohort, _, model, background = replica_fit
    gi = global_importance(model, cohort.values[:10], background)
    assert render_summary(gi, seed=1) == render_summary(gi, seed=1)
    assert render_summary(gi, seed=1) != render_summary(gi, seed=2)


def test_summary_needs_instances():
    gi = GlobalImportance(("A",), np.zeros(1), np.zeros((0, 1)), np.zeros((0, 1)), 0.2)
    with pytest.raises(RenderError):
        render_summary(gi)


# -- ROC ----------------------------------------------------------------------

def points_of(polyline):
    return [tuple(float(v) for v in p.split(",")) for p in polyline.get("points").split()]


def test_roc_perfect_separation():
    root = parse(render_roc(roc_points([0.9, 0.1], [1, 0])))
    assert texts(root, "auc-label") == ["AUC = 1.00"]
    (curve,) = by_class(root, "polyline", "roc-curve")
    pts = points_of(curve)
    assert len(pts) == 3
    (chance,) = by_class(root, "line", "chance")
    assert chance.get("stroke-dasharray")
    # curve starts at the chance line's origin and ends at its far corner
    assert pts[0] == (float(chance.get("x1")), float(chance.get("y1")))
    assert pts[-1] == (float(chance.get("x2")), float(chance.get("y2")))
    # (0, 1): left edge, top of the plot area
    assert pts[1][0] == pts[0][0] and pts[1][1] == pts[2][1]


# -- calibration --------------------------------------------------------------

def test_calibration_single_bin_on_diagonal():
    curve = calibration_curve([0.7] * 10, [1] * 7 + [0] * 3)
    root = parse(render_calibration(curve))
    (pt,) = by_class(root, "circle", "calibration-point")
    (diag,) = by_class(root, "line", "perfect-calibration")
    x0, y0, x1, y1 = (float(diag.get(k)) for k in ("x1", "y1", "x2", "y2"))
    cx, cy = float(pt.get("cx")), float(pt.get("cy"))
    # (cx, cy) lies on the diagonal up to pixel rounding
    assert abs((cx - x0) * (y1 - y0) - (cy - y0) * (x1 - x0)) / abs(x1 - x0) < 0.02
    assert texts(root, "count-label") == ["n=10"]


def test_calibration_point_count_and_optional_counts(rng):
    s = rng.random(500)
    curve = calibration_curve(s, (rng.random(500) < s).astype(int))
    root = parse(render_calibration(curve, annotate_counts=False))
    assert len(by_class(root, "circle", "calibration-point")) == len(curve.bins)
    assert texts(root, "count-label") == []


# -- invariants ---------------------------------------------------------------

def test_every_kind_deterministic_and_well_formed(replica_fit, tmp_path):
    cohort, _, model, background = replica_fit
    rng = np.random.default_rng(0)
    s = rng.random(200)
    y = (rng.random(200) < s).astype(int)
    gi = global_importance(model, cohort.values[:20], background)
    makers = {
        "waterfall": lambda: render_waterfall(two_feature_attr()),
        "summary": lambda: render_summary(gi),
        "roc": lambda: render_roc(roc_points(s, y)),
        "calibration": lambda: render_calibration(calibration_curve(s, y)),
    }
    assert set(makers) == set(KINDS)
    for kind, make in makers.items():
        a, b = make(), make()
        assert a == b
        parse(a)
        assert a.startswith("<?xml")
        p = write_figure(a, tmp_path, "r1", kind)
        assert p == figure_path(tmp_path, "r1", kind) and p.name == f"r1_{kind}.svg"
        assert p.read_text(encoding="utf-8") == a
    with pytest.raises(RenderError):
        figure_path(tmp_path, "r1", "pie")
