"""Render assessment reports as JSON, plain text or SVG.

SVG output is assembled from fixed templates so identical reports give
byte-identical files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from datetime import datetime
from fractions import Fraction
from typing import Any, Sequence
from xml.sax.saxutils import escape

from .model import ModelError, format_timestamp, parse_timestamp
from .scoring import AssessmentReport, GapPlan, GroupingScore, LevelScore, Upgrade

__all__ = [
    "RenderedReport",
    "gap_lines",
    "parse_report",
    "render",
    "render_trend",
    "report_from_dict",
    "report_to_dict",
]

FORMATS = ("json", "text", "svg")


@dataclass(frozen=True)
class RenderedReport:
    format: str
    data: bytes

    def text(self) -> str:
        return self.data.decode("utf-8")


# -- exact numbers in JSON ----------------------------------------------------


def _num(value: Fraction) -> int | str:
    """Integers stay JSON numbers; other rationals become "p/q" strings."""
    value = Fraction(value)
    return value.numerator if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def _parse_num(value: Any, where: str) -> Fraction:
    if isinstance(value, bool):
        raise ModelError(f"report: {where}: expected a number")
    if isinstance(value, int):
        return Fraction(value)
    if isinstance(value, str):
        try:
            return Fraction(value)
        except ValueError:
            pass
    raise ModelError(f"report: {where}: expected an integer or 'p/q' string, got {value!r}")


def _fmt(value: Fraction) -> str:
    value = Fraction(value)
    return str(value.numerator) if value.denominator == 1 else f"{value.numerator}/{value.denominator}"


def _signed(value: Fraction) -> str:
    text = _fmt(value)
    return text if value < 0 else "+" + text


# -- json ---------------------------------------------------------------------


def report_to_dict(report: AssessmentReport) -> dict:
    doc: dict[str, Any] = {"model_id": report.model_id, "respondents": report.respondents}
    doc["threshold"] = (
        None
        if report.threshold is None
        else {"num": report.threshold.numerator, "den": report.threshold.denominator}
    )
    doc["levels"] = [
        {
            "index": s.level_index,
            "name": s.name,
            "points_num": s.points.numerator,
            "points_den": s.points.denominator,
            "max": s.max_points,
            "min": s.min_points,
            "required": s.required_points,
            "percentage": round(float(s.percentage), 3),
            "band": s.band.value,
            "passed": s.passed,
        }
        for s in report.levels
    ]
    doc["achieved_level"] = report.achieved_level
    if report.respondent_levels is not None:
        doc["respondent_levels"] = list(report.respondent_levels)
    if report.groupings is not None:
        doc["groupings"] = [
            {"name": g.name, "total": _num(g.total), "min": g.min_total, "max": g.max_total}
            for g in report.groupings
        ]
    if report.gap is not None:
        doc["gap"] = {
            "target": report.gap.target_level,
            "deficit_num": report.gap.deficit_points.numerator,
            "deficit_den": report.gap.deficit_points.denominator,
            "upgrades": [{"item": u.item_id, "from": _num(u.current), "to": u.proposed} for u in report.gap.upgrades],
        }
    if report.warnings:
        doc["warnings"] = list(report.warnings)
    doc["produced_at"] = format_timestamp(report.produced_at)
    return doc


def report_from_dict(doc: Any) -> AssessmentReport:
    """Rebuild a report from its JSON form. Percentage and band are derived, so they are not read back."""
    try:
        levels = tuple(
            LevelScore(
                level_index=lv["index"],
                name=lv["name"],
                points=Fraction(lv["points_num"], lv["points_den"]),
                max_points=lv["max"],
                min_points=lv["min"],
                required_points=lv["required"],
                passed=lv["passed"],
            )
            for lv in doc["levels"]
        )
        threshold = doc.get("threshold")
        groupings = doc.get("groupings")
        gap = doc.get("gap")
        respondent_levels = doc.get("respondent_levels")
        return AssessmentReport(
            model_id=doc["model_id"],
            respondents=doc["respondents"],
            levels=levels,
            achieved_level=doc["achieved_level"],
            produced_at=parse_timestamp(doc["produced_at"]),
            threshold=None if threshold is None else Fraction(threshold["num"], threshold["den"]),
            groupings=None
            if groupings is None
            else tuple(
                GroupingScore(g["name"], _parse_num(g["total"], f"groupings[{i}].total"), g["min"], g["max"])
                for i, g in enumerate(groupings)
            ),
            gap=None
            if gap is None
            else GapPlan(
                gap["target"],
                Fraction(gap["deficit_num"], gap["deficit_den"]),
                tuple(
                    Upgrade(u["item"], _parse_num(u["from"], f"gap.upgrades[{i}].from"), u["to"])
                    for i, u in enumerate(gap["upgrades"])
                ),
            ),
            respondent_levels=None if respondent_levels is None else tuple(respondent_levels),
            warnings=tuple(doc.get("warnings", ())),
        )
    except (KeyError, TypeError, ZeroDivisionError) as exc:
        raise ModelError(f"report: malformed report document ({exc!r})") from exc


def parse_report(source: bytes | str) -> AssessmentReport:
    try:
        doc = json.loads(source)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ModelError(f"report: malformed JSON ({exc})") from exc
    return report_from_dict(doc)


def _json_bytes(doc: Any) -> bytes:
    return (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


# -- text ---------------------------------------------------------------------


def gap_lines(gap: GapPlan) -> list[str]:
    """Plain-text lines describing a gap plan."""
    if not gap.upgrades:
        return [f"Level {gap.target_level} already passes; nothing to raise."]
    noun = "item" if len(gap.upgrades) == 1 else "items"
    lines = [
        f"Gap to level {gap.target_level}: deficit {_fmt(gap.deficit_points)} points; "
        f"raise {len(gap.upgrades)} {noun} to the maximum"
    ]
    lines += [f"  {u.item_id}: {_fmt(u.current)} -> {u.proposed}" for u in gap.upgrades]
    return lines


def _text(report: AssessmentReport, flag_below: Fraction | None = None) -> str:
    who = "respondent" if report.respondents == 1 else "respondents"
    lines = [
        f"Model: {report.model_id} ({report.respondents} {who})",
        f"Produced at: {format_timestamp(report.produced_at)}",
        "",
        f"{'Level':<6}{'Name':<30}{'Points':>9}{'Required':>10}{'Adherence':>11}  {'Band':<14}Result",
    ]
    for s in report.levels:
        required = "-" if s.required_points is None else str(s.required_points)
        result = {True: "pass", False: "FAIL", None: "n/a"}[s.passed]
        lines.append(
            f"{s.level_index:<6}{s.name[:29]:<30}{_fmt(s.points) + '/' + str(s.max_points):>9}"
            f"{required:>10}{float(s.percentage):>10.1f}%  {s.band.value:<14}{result}"
        )
    lines.append("")
    if report.achieved_level is None:
        lines.append("Achieved level: n/a (model has no threshold)")
    else:
        lines.append(f"Achieved level: {report.achieved_level}")
    if report.respondent_levels is not None:
        lines.append("Per-respondent levels: " + ", ".join(map(str, report.respondent_levels)))
    if report.gap is not None:
        lines += gap_lines(report.gap)
    if report.groupings:
        lines += ["", "Grouping totals:"]
        for g in report.groupings:
            flag = ""
            if flag_below is not None and g.total < flag_below:
                flag = f"  [below {_fmt(flag_below)}]"
            lines.append(f"  {g.name:<28}{_signed(g.total):>7}  (range {g.min_total}..{g.max_total}){flag}")
    for warning in report.warnings:
        lines.append(f"warning: {warning}")
    return "\n".join(lines) + "\n"


# -- svg ----------------------------------------------------------------------

SVG_WIDTH = 800
ROW_HEIGHT = 40
TOP = 50
BOTTOM = 40
BAR_X = 220
BAR_WIDTH = 520
BAR_HEIGHT = 24


def _px(value: float | Fraction) -> str:
    return f"{float(value):.2f}"


def bar_length(percentage: Fraction) -> Fraction:
    return Fraction(BAR_WIDTH) * Fraction(percentage) / 100


def _svg(report: AssessmentReport) -> str:
    n = len(report.levels)
    height = TOP + ROW_HEIGHT * n + BOTTOM
    achieved = report.achieved_level
    title = f"{report.model_id}: achieved level {achieved}" if achieved is not None else report.model_id
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_WIDTH}" height="{height}" '
        f'viewBox="0 0 {SVG_WIDTH} {height}">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{height}" fill="#ffffff"/>',
        f'<text x="20" y="30" font-family="sans-serif" font-size="16" font-weight="bold">{escape(title)}</text>',
    ]
    for i, s in enumerate(report.levels):
        y = TOP + ROW_HEIGHT * i
        bar_y = y + (ROW_HEIGHT - BAR_HEIGHT) / 2
        is_achieved = s.level_index == achieved
        fill = "#2e7d32" if is_achieved else ("#c62828" if s.passed is False else "#78909c")
        weight = ' font-weight="bold"' if is_achieved else ""
        length = bar_length(s.percentage)
        out.append(
            f'<text x="20" y="{_px(bar_y + 17)}" font-family="sans-serif" font-size="13"{weight}>'
            f"{s.level_index} {escape(s.name[:26])}</text>"
        )
        out.append(
            f'<rect x="{BAR_X}" y="{_px(bar_y)}" width="{BAR_WIDTH}" height="{BAR_HEIGHT}" '
            f'fill="#eceff1"/>'
        )
        stroke = ' stroke="#000000" stroke-width="2"' if is_achieved else ""
        out.append(
            f'<rect id="bar-{s.level_index}" x="{BAR_X}" y="{_px(bar_y)}" width="{_px(length)}" '
            f'height="{BAR_HEIGHT}" fill="{fill}"{stroke}/>'
        )
        out.append(
            f'<text x="{_px(BAR_X + BAR_WIDTH + 8)}" y="{_px(bar_y + 17)}" font-family="sans-serif" '
            f'font-size="12">{float(s.percentage):.1f}%</text>'
        )
    if report.threshold is not None:
        x = BAR_X + bar_length(100 * report.threshold)
        out.append(
            f'<line id="threshold" x1="{_px(x)}" y1="{TOP - 6}" x2="{_px(x)}" y2="{TOP + ROW_HEIGHT * n + 6}" '
            f'stroke="#d50000" stroke-width="2" stroke-dasharray="6,4"/>'
        )
        out.append(
            f'<text x="{_px(x)}" y="{TOP + ROW_HEIGHT * n + 22}" text-anchor="middle" '
            f'font-family="sans-serif" font-size="12">{float(100 * report.threshold):g}%</text>'
        )
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render(report: AssessmentReport, format: str = "text", *, flag_below: Fraction | None = None) -> RenderedReport:
    if format == "json":
        return RenderedReport("json", _json_bytes(report_to_dict(report)))
    if format == "text":
        return RenderedReport("text", _text(report, flag_below).encode("utf-8"))
    if format == "svg":
        return RenderedReport("svg", _svg(report).encode("utf-8"))
    raise ValueError(f"unknown format {format!r}; expected one of {', '.join(FORMATS)}")


# -- trend --------------------------------------------------------------------

TREND_HEIGHT = 300
PLOT_LEFT, PLOT_RIGHT, PLOT_END = 60, 700, 760
PLOT_TOP, PLOT_BOTTOM = 40, 240


def trend_points(history: Sequence[tuple[datetime, int]]) -> list[tuple[Fraction, Fraction]]:
    """Plot coordinates of each assessment in the trend chart."""
    top_level = max(5, max(level for _, level in history))
    t0, t1 = history[0][0], history[-1][0]
    span = (t1 - t0).total_seconds()
    out = []
    for i, (ts, level) in enumerate(history):
        if span > 0:
            frac = Fraction(int((ts - t0).total_seconds()), int(span))
        elif len(history) > 1:
            frac = Fraction(i, len(history) - 1)
        else:
            frac = Fraction(0)
        x = PLOT_LEFT + (PLOT_RIGHT - PLOT_LEFT) * frac
        y = PLOT_BOTTOM - Fraction((PLOT_BOTTOM - PLOT_TOP) * (level - 1), top_level - 1)
        out.append((x, y))
    return out


def render_trend(history: Sequence[tuple[datetime, int]], format: str = "svg") -> RenderedReport:
    """Step chart (or text listing) of achieved level over time."""
    if not history:
        raise ValueError("no assessments in history")
    if any(level is None for _, level in history):
        raise ValueError("history contains assessments without a maturity level")
    if any(b[0] < a[0] for a, b in zip(history, history[1:])):
        raise ValueError("history must be sorted by timestamp")

    if format == "text":
        lines = [f"{format_timestamp(ts)}  level {level}" for ts, level in history]
        return RenderedReport("text", ("\n".join(lines) + "\n").encode("utf-8"))
    if format != "svg":
        raise ValueError(f"unknown trend format {format!r}")

    points = trend_points(history)
    top_level = max(5, max(level for _, level in history))
    d = [f"M {_px(points[0][0])} {_px(points[0][1])}"]
    for x, y in points[1:]:
        d.append(f"H {_px(x)} V {_px(y)}")
    d.append(f"H {PLOT_END}")
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SVG_WIDTH}" height="{TREND_HEIGHT}" '
        f'viewBox="0 0 {SVG_WIDTH} {TREND_HEIGHT}">',
        f'<rect x="0" y="0" width="{SVG_WIDTH}" height="{TREND_HEIGHT}" fill="#ffffff"/>',
        '<text x="20" y="24" font-family="sans-serif" font-size="16" font-weight="bold">Achieved level over time</text>',
        f'<line x1="{PLOT_LEFT}" y1="{PLOT_BOTTOM}" x2="{PLOT_END}" y2="{PLOT_BOTTOM}" stroke="#90a4ae"/>',
        f'<line x1="{PLOT_LEFT}" y1="{PLOT_TOP}" x2="{PLOT_LEFT}" y2="{PLOT_BOTTOM}" stroke="#90a4ae"/>',
    ]
    for level in range(1, top_level + 1):
        y = PLOT_BOTTOM - Fraction((PLOT_BOTTOM - PLOT_TOP) * (level - 1), top_level - 1)
        out.append(
            f'<text x="{PLOT_LEFT - 10}" y="{_px(y + 4)}" text-anchor="end" font-family="sans-serif" '
            f'font-size="12">{level}</text>'
        )
    out.append(f'<path id="trend" d="{" ".join(d)}" fill="none" stroke="#2e7d32" stroke-width="3"/>')
    for i, (x, y) in enumerate(points):
        out.append(f'<circle id="point-{i}" cx="{_px(x)}" cy="{_px(y)}" r="4" fill="#2e7d32"/>')
    first, last = format_timestamp(history[0][0]), format_timestamp(history[-1][0])
    out.append(
        f'<text x="{PLOT_LEFT}" y="{PLOT_BOTTOM + 22}" font-family="sans-serif" font-size="11">{first}</text>'
    )
    if len(history) > 1:
        out.append(
            f'<text x="{PLOT_RIGHT}" y="{PLOT_BOTTOM + 22}" text-anchor="end" font-family="sans-serif" '
            f'font-size="11">{last}</text>'
        )
    out.append("</svg>")
    return RenderedReport("svg", ("\n".join(out) + "\n").encode("utf-8"))
