from __future__ import annotations

import re
import xml.etree.ElementTree as ET
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from pathlib import Path

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from riskmaturity.report import (
    BAR_WIDTH,
    BAR_X,
    parse_report,
    render,
    render_trend,
    report_to_dict,
)
from riskmaturity.scoring import score_assessment

from .conftest import respond

GOLDEN = Path(__file__).parent / "golden"
SVG = "{http://www.w3.org/2000/svg}"
PRODUCED = datetime(2026, 10, 16, 9, 30, tzinfo=timezone.utc)


def report_for(model, points, n=1):
    sets = [respond(model, points, f"r{i}") for i in range(n)]
    return score_assessment(model, sets, produced_at=PRODUCED)


def bars(svg: bytes) -> dict[int, float]:
    root = ET.fromstring(svg)
    return {
        int(el.get("id").split("-")[1]): float(el.get("width"))
        for el in root.iter(SVG + "rect")
        if (el.get("id") or "").startswith("bar-")
    }


@pytest.mark.parametrize("fmt, suffix", [("json", "json"), ("text", "txt"), ("svg", "svg")])
def test_golden_all_three(rmgp, fmt, suffix):
    data = render(report_for(rmgp, 3), fmt).data
    assert data == (GOLDEN / f"rmgp-all3.{suffix}").read_bytes()


def test_golden_level_three(rmgp):
    points = {i: (2 if i.startswith("L4") else 3) for i in rmgp.item_ids}
    report = report_for(rmgp, points)
    assert render(report, "text").data == (GOLDEN / "rmgp-level3.txt").read_bytes()
    assert render(report, "svg").data == (GOLDEN / "rmgp-level3.svg").read_bytes()


def test_golden_pmmm_text(pmmm):
    points = {i: 0 for i in pmmm.item_ids}
    points.update(Q1=2, Q3=-1, Q14=3)
    data = render(report_for(pmmm, points), "text", flag_below=Fraction(1)).data
    assert data == (GOLDEN / "pmmm.txt").read_bytes()


def test_text_banner_and_gap(rmgp):
    text = render(report_for(rmgp, 0), "text").text()
    assert "Achieved level: 1" in text
    assert "Gap to level 2: deficit 27 points; raise 7 items" in text
    assert text.count("FAIL") == 4


def test_svg_all_three_touches_threshold(rmgp):
    svg = render(report_for(rmgp, 3), "svg").data
    root = ET.fromstring(svg)
    line = next(el for el in root.iter(SVG + "line") if el.get("id") == "threshold")
    threshold_x = float(line.get("x1"))
    assert threshold_x == BAR_X + 0.75 * BAR_WIDTH
    widths = bars(svg)
    assert len(widths) == 5
    for index in range(2, 6):
        assert BAR_X + widths[index] == pytest.approx(threshold_x, abs=0.5)


def test_svg_all_minimum(rmgp):
    svg = render(report_for(rmgp, 0), "svg").data
    widths = bars(svg)
    assert all(widths[i] == 0 for i in range(2, 6))
    assert b"achieved level 1" in svg
    highlighted = [
        el.get("id") for el in ET.fromstring(svg).iter(SVG + "rect") if el.get("stroke") == "#000000"
    ]
    assert highlighted == ["bar-1"]


def test_svg_dimensions(rmgp, pmmm):
    for model, n in ((rmgp, 5), (pmmm, 1)):
        root = ET.fromstring(render(report_for(model, 0), "svg").data)
        assert root.get("width") == "800"
        assert int(root.get("height")) == 40 * n + 90
        assert len(bars(render(report_for(model, 0), "svg").data)) == n


@settings(max_examples=60)
@given(st.lists(st.integers(0, 4), min_size=32, max_size=32), st.integers(1, 3))
def test_svg_bar_lengths_proportional(rmgp, values, n):
    report = report_for(rmgp, dict(zip(rmgp.item_ids, values)), n)
    widths = bars(render(report, "svg").data)
    for s in report.levels:
        assert widths[s.level_index] == pytest.approx(float(s.percentage) / 100 * BAR_WIDTH, abs=0.5)


@settings(max_examples=100)
@given(st.lists(st.lists(st.integers(0, 4), min_size=32, max_size=32), min_size=1, max_size=3), st.booleans())
def test_json_roundtrip(rmgp, groups, drop_one):
    sets = [respond(rmgp, dict(zip(rmgp.item_ids, v)), f"r{i}") for i, v in enumerate(groups)]
    if drop_one:
        answers = {k: v for k, v in sets[0].answers.items() if k != "L3Q3"}
        sets[0] = type(sets[0])(sets[0].model_id, "partial", answers, sets[0].recorded_at)
    report = score_assessment(rmgp, sets, missing_as_minimum=True, produced_at=PRODUCED)
    data = render(report, "json").data
    assert parse_report(data) == report
    assert render(parse_report(data), "json").data == data


@given(st.lists(st.lists(st.integers(-3, 3), min_size=20, max_size=20), min_size=1, max_size=3))
def test_json_roundtrip_pmmm(pmmm, groups):
    sets = [respond(pmmm, dict(zip(pmmm.item_ids, v)), f"r{i}") for i, v in enumerate(groups)]
    report = score_assessment(pmmm, sets, produced_at=PRODUCED)
    assert parse_report(render(report, "json").data) == report


def test_json_field_order(rmgp):
    doc = report_to_dict(report_for(rmgp, 0))
    assert list(doc) == ["model_id", "respondents", "threshold", "levels", "achieved_level", "gap", "produced_at"]
    assert list(doc["levels"][0]) == [
        "index", "name", "points_num", "points_den", "max", "min", "required", "percentage", "band", "passed",
    ]


def test_render_is_deterministic(rmgp):
    report = report_for(rmgp, 2, 3)
    for fmt in ("json", "text", "svg"):
        assert render(report, fmt).data == render(report, fmt).data


def test_render_unknown_format(rmgp):
    with pytest.raises(ValueError):
        render(report_for(rmgp, 0), "pdf")


def test_svg_escapes_names(rmgp):
    from dataclasses import replace

    report = report_for(rmgp, 0)
    levels = (replace(report.levels[0], name="A & <B>"),) + report.levels[1:]
    svg = render(replace(report, levels=levels), "svg").data
    ET.fromstring(svg)
    assert b"A &amp; &lt;B&gt;" in svg


# -- trend --------------------------------------------------------------------


def day(n: int) -> datetime:
    return datetime(2026, 1, 1, tzinfo=timezone.utc) + timedelta(days=n)


def path_coords(svg: bytes) -> list[tuple[str, float]]:
    root = ET.fromstring(svg)
    d = next(el for el in root.iter(SVG + "path") if el.get("id") == "trend").get("d")
    return [(cmd, float(v)) for cmd, v in re.findall(r"([MHV]) ([\d.]+)", d)]


def test_trend_single_step():
    svg = render_trend([(day(0), 2)]).data
    ET.fromstring(svg)
    verticals = [v for cmd, v in path_coords(svg) if cmd == "V"]
    assert verticals == []
    assert len(ET.fromstring(svg).findall(SVG + "circle")) == 1


def test_trend_staircase_up():
    svg = render_trend([(day(0), 1), (day(10), 2), (day(20), 3)]).data
    ys = [v for cmd, v in path_coords(svg) if cmd == "V"]
    assert len(ys) == 2 and ys[0] > ys[1]  # SVG y grows downward


def test_trend_regression_steps_down():
    svg = render_trend([(day(0), 3), (day(5), 2)]).data
    d = next(el for el in ET.fromstring(svg).iter(SVG + "path")).get("d")
    start_y = float(re.match(r"M [\d.]+ ([\d.]+)", d).group(1))
    ys = [v for cmd, v in path_coords(svg) if cmd == "V"]
    assert ys == [pytest.approx(start_y + 50)]
    assert svg == render_trend([(day(0), 3), (day(5), 2)]).data


def test_trend_golden():
    history = [
        (datetime(2026, 1, 1, tzinfo=timezone.utc), 1),
        (datetime(2026, 4, 1, tzinfo=timezone.utc), 2),
        (datetime(2026, 7, 1, tzinfo=timezone.utc), 3),
        (datetime(2026, 10, 1, tzinfo=timezone.utc), 2),
    ]
    assert render_trend(history).data == (GOLDEN / "trend.svg").read_bytes()


def test_trend_text_and_errors():
    text = render_trend([(day(0), 1), (day(1), 2)], "text").text()
    assert text == "2026-01-01T00:00:00Z  level 1\n2026-01-02T00:00:00Z  level 2\n"
    with pytest.raises(ValueError, match="no assessments"):
        render_trend([])
    with pytest.raises(ValueError, match="sorted"):
        render_trend([(day(2), 1), (day(1), 2)])
