from __future__ import annotations

from datetime import datetime, timezone

import pytest

from riskmaturity.model import MaturityModel, ResponseSet, builtin_model

T0 = datetime(2026, 3, 1, 12, 0, 0, tzinfo=timezone.utc)


@pytest.fixture(scope="session")
def rmgp() -> MaturityModel:
    return builtin_model("rmgp-v1")


@pytest.fixture(scope="session")
def pmmm() -> MaturityModel:
    return builtin_model("pmmm-lifecycle")


def respond(model: MaturityModel, points: dict[str, int] | int, respondent: str = "r1", at: datetime = T0) -> ResponseSet:
    """Build a response set from item points (or one value for every item)."""
    if isinstance(points, int):
        points = {item_id: points for item_id in model.item_ids}
    answers = {item_id: model.scale.label_for(p) for item_id, p in points.items()}
    return ResponseSet(model.id, respondent, answers, at)


@pytest.fixture(autouse=True)
def _pinned_clock(monkeypatch):
    monkeypatch.setenv("PRODUCED_AT", "2026-10-16T09:30:00Z")


def pytest_terminal_summary(terminalreporter):
    from .test_acceptance import RESULTS

    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        title, ok, detail = RESULTS[number]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'} criterion {number} ({title}): {detail}")
