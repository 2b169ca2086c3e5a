"""Scoring engine: level points, staged level determination, adherence bands,
grouping totals and gap plans.

All arithmetic is exact. Multi-respondent answers are averaged per item as
``Fraction(sum, count)`` so a pass/fail decision never depends on float
rounding.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from fractions import Fraction
from numbers import Rational
from typing import Iterable, Mapping, Sequence

from .model import (
    FRACTION_OF_MAX,
    MaturityModel,
    ResponseSet,
    utc_now,
)

log = logging.getLogger(__name__)

__all__ = [
    "AdherenceBand",
    "AssessmentReport",
    "GapPlan",
    "GroupingScore",
    "LevelNotApplicable",
    "LevelScore",
    "ScoringError",
    "Upgrade",
    "aggregate",
    "classify_adherence",
    "determine_level",
    "gap_analysis",
    "resolve_points",
    "score_assessment",
    "score_groupings",
    "score_level",
    "score_levels",
]


class ScoringError(ValueError):
    pass


class IncompleteResponseError(ScoringError):
    def __init__(self, respondent: str, missing: Sequence[str]) -> None:
        self.respondent = respondent
        self.missing = tuple(missing)
        super().__init__(f"response from {respondent!r} is missing item(s): {', '.join(self.missing)}")


class LevelNotApplicable(ScoringError):
    """Level determination requested for a model without a threshold."""


class AdherenceBand(str, Enum):
    NULA_OU_FRACA = "nula_ou_fraca"
    REGULAR = "regular"
    BOA = "boa"
    COMPLETA = "completa"

    @property
    def range(self) -> str:
        return _BAND_RANGES[self]


_BAND_RANGES = {
    AdherenceBand.NULA_OU_FRACA: "[0, 20]",
    AdherenceBand.REGULAR: "(20, 60]",
    AdherenceBand.BOA: "(60, 90]",
    AdherenceBand.COMPLETA: "(90, 100]",
}


def classify_adherence(percentage: Rational | float | str) -> AdherenceBand:
    """Map an adherence percentage in [0, 100] to its band.

    The boundaries 20, 60 and 90 belong to the lower band.
    """
    p = Fraction(percentage)
    if p < 0 or p > 100:
        raise ValueError(f"adherence percentage {percentage} outside [0, 100]")
    if p <= 20:
        return AdherenceBand.NULA_OU_FRACA
    if p <= 60:
        return AdherenceBand.REGULAR
    if p <= 90:
        return AdherenceBand.BOA
    return AdherenceBand.COMPLETA


@dataclass(frozen=True)
class LevelScore:
    level_index: int
    name: str
    points: Fraction
    max_points: int
    min_points: int
    required_points: int | None
    passed: bool | None

    @property
    def percentage(self) -> Fraction:
        # Measured from the scale floor so bipolar scales stay within [0, 100].
        span = self.max_points - self.min_points
        if span == 0:
            return Fraction(100)
        return 100 * (self.points - self.min_points) / span

    @property
    def band(self) -> AdherenceBand:
        return classify_adherence(self.percentage)


@dataclass(frozen=True)
class GroupingScore:
    name: str
    total: Fraction
    min_total: int
    max_total: int


@dataclass(frozen=True)
class Upgrade:
    item_id: str
    current: Fraction
    proposed: int


@dataclass(frozen=True)
class GapPlan:
    target_level: int
    deficit_points: Fraction
    upgrades: tuple[Upgrade, ...] = ()


@dataclass(frozen=True)
class AssessmentReport:
    model_id: str
    respondents: int
    levels: tuple[LevelScore, ...]
    achieved_level: int | None
    produced_at: datetime
    threshold: Fraction | None = None
    groupings: tuple[GroupingScore, ...] | None = None
    gap: GapPlan | None = None
    respondent_levels: tuple[int, ...] | None = None
    warnings: tuple[str, ...] = field(default=())

    @property
    def bands(self) -> tuple[AdherenceBand, ...]:
        return tuple(level.band for level in self.levels)


# -- answers ------------------------------------------------------------------


def resolve_points(
    model: MaturityModel,
    response: ResponseSet,
    *,
    missing_as_minimum: bool = False,
) -> tuple[dict[str, int], list[str]]:
    """Convert one response's labels to points.

    Returns the point map and the ids that were filled with the scale minimum.
    """
    known = set(model.item_ids)
    extra = sorted(set(response.answers) - known)
    if extra:
        raise ScoringError(f"response from {response.respondent!r} answers unknown item(s): {', '.join(extra)}")
    points: dict[str, int] = {}
    missing: list[str] = []
    for item_id in model.item_ids:
        label = response.answers.get(item_id)
        if label is None:
            missing.append(item_id)
            continue
        try:
            points[item_id] = model.scale.points_for(label)
        except KeyError:
            raise ScoringError(
                f"response from {response.respondent!r}: item {item_id} has unknown label {label!r}"
            ) from None
    if missing:
        if not missing_as_minimum:
            raise IncompleteResponseError(response.respondent, missing)
        for item_id in missing:
            points[item_id] = model.scale.min_points
    return points, missing


def _mean(point_maps: Sequence[Mapping[str, int]], item_ids: Iterable[str]) -> dict[str, Fraction]:
    n = len(point_maps)
    return {item_id: Fraction(sum(pm[item_id] for pm in point_maps), n) for item_id in item_ids}


def aggregate(
    responses: Sequence[ResponseSet],
    model: MaturityModel,
    *,
    missing_as_minimum: bool = False,
) -> dict[str, Fraction]:
    """Per-item arithmetic mean of the respondents' points, kept exact."""
    if not responses:
        raise ScoringError("no responses to aggregate")
    maps = []
    for response in responses:
        points, missing = resolve_points(model, response, missing_as_minimum=missing_as_minimum)
        if missing:
            log.warning("%s: %d missing answer(s) scored at the scale minimum", response.respondent, len(missing))
        maps.append(points)
    return _mean(maps, model.item_ids)


# -- levels -------------------------------------------------------------------


def score_level(model: MaturityModel, level_index: int, answers: Mapping[str, Fraction | int]) -> LevelScore:
    try:
        level = model.level(level_index)
    except KeyError:
        raise ScoringError(f"model {model.id!r} has no level {level_index}") from None
    missing = [item_id for item_id in level.item_ids if item_id not in answers]
    if missing:
        raise ScoringError(f"level {level_index}: no answer for item(s) {', '.join(missing)}")

    n = len(level.items)
    points = sum((Fraction(answers[i]) for i in level.item_ids), Fraction(0))
    required = model.threshold.required_points(n, model.scale.max_points)
    if required is None or n == 0:
        passed = None
    else:
        passed = points >= required
    return LevelScore(
        level_index=level.index,
        name=level.name,
        points=points,
        max_points=n * model.scale.max_points,
        min_points=n * model.scale.min_points,
        required_points=required,
        passed=passed,
    )


def score_levels(model: MaturityModel, answers: Mapping[str, Fraction | int]) -> list[LevelScore]:
    return [score_level(model, level.index, answers) for level in model.levels]


def determine_level(model: MaturityModel, scores: Sequence[LevelScore]) -> int:
    """Highest level L such that every level from 2 up to L passes.

    Level 1 is the floor. A level with no items counts as passed, and a failed
    level voids every level above it regardless of their own results.
    """
    if model.threshold.kind != FRACTION_OF_MAX:
        raise LevelNotApplicable(f"model {model.id!r} has no threshold; no maturity level applies")
    indices = [s.level_index for s in scores]
    if indices != [level.index for level in model.levels]:
        raise ScoringError(f"scores cover levels {indices}, model has {[lv.index for lv in model.levels]}")
    achieved = 1
    for score in scores[1:]:
        if score.passed is False:
            break
        achieved = score.level_index
    return achieved


# -- groupings ----------------------------------------------------------------


def score_groupings(model: MaturityModel, answers: Mapping[str, Fraction | int]) -> list[GroupingScore]:
    if not model.groupings:
        raise ScoringError(f"model {model.id!r} defines no groupings")
    out = []
    for grouping in model.groupings:
        missing = [i for i in grouping.item_ids if i not in answers]
        if missing:
            raise ScoringError(f"grouping {grouping.name!r}: no answer for item(s) {', '.join(missing)}")
        n = len(grouping.item_ids)
        total = sum((Fraction(answers[i]) for i in grouping.item_ids), Fraction(0))
        out.append(GroupingScore(grouping.name, total, n * model.scale.min_points, n * model.scale.max_points))
    return out


# -- gap analysis -------------------------------------------------------------


def gap_analysis(model: MaturityModel, answers: Mapping[str, Fraction | int], target_level: int) -> GapPlan:
    """Fewest items of *target_level* to raise to the scale maximum so that it passes.

    Taking items by largest headroom first maximizes the gain for any number of
    touched items, so the first prefix that covers the deficit is minimal.
    Ties go to the smaller item id.
    """
    if model.threshold.kind != FRACTION_OF_MAX:
        raise ScoringError(f"model {model.id!r} has no threshold; gap analysis does not apply")
    score = score_level(model, target_level, answers)
    if score.passed is not False:
        return GapPlan(target_level, Fraction(0))

    deficit = score.required_points - score.points
    top = model.scale.max_points
    level = model.level(target_level)
    ranked = sorted(
        ((top - Fraction(answers[i]), i) for i in level.item_ids),
        key=lambda pair: (-pair[0], pair[1]),
    )
    upgrades = []
    gained = Fraction(0)
    for headroom, item_id in ranked:
        if gained >= deficit:
            break
        upgrades.append(Upgrade(item_id, Fraction(answers[item_id]), top))
        gained += headroom
    assert gained >= deficit, "fraction <= 1 guarantees an all-max level passes"
    return GapPlan(target_level, deficit, tuple(upgrades))


# -- whole assessment ---------------------------------------------------------


def score_assessment(
    model: MaturityModel,
    responses: Sequence[ResponseSet],
    *,
    missing_as_minimum: bool = False,
    produced_at: datetime | None = None,
) -> AssessmentReport:
    if not responses:
        raise ScoringError("no responses to score")
    others = sorted({r.model_id for r in responses} - {model.id})
    if others:
        raise ScoringError(f"responses are for model(s) {', '.join(others)}, not {model.id!r}")

    warnings: list[str] = []
    maps: list[dict[str, int]] = []
    for response in responses:
        points, missing = resolve_points(model, response, missing_as_minimum=missing_as_minimum)
        if missing:
            warnings.append(
                f"{response.respondent}: {len(missing)} missing answer(s) scored at the scale minimum "
                f"({', '.join(missing)})"
            )
        maps.append(points)
    answers = _mean(maps, model.item_ids)
    levels = score_levels(model, answers)

    achieved = gap = respondent_levels = None
    threshold = None
    if model.threshold.kind == FRACTION_OF_MAX:
        threshold = model.threshold.fraction
        achieved = determine_level(model, levels)
        if achieved < len(model.levels):
            gap = gap_analysis(model, answers, achieved + 1)
        if len(maps) > 1:
            # Supplementary only; never vetoes the aggregate result.
            respondent_levels = tuple(determine_level(model, score_levels(model, pm)) for pm in maps)

    groupings = tuple(score_groupings(model, answers)) if model.groupings else None
    return AssessmentReport(
        model_id=model.id,
        respondents=len(responses),
        levels=tuple(levels),
        achieved_level=achieved,
        produced_at=produced_at or utc_now(),
        threshold=threshold,
        groupings=groupings,
        gap=gap,
        respondent_levels=respondent_levels,
        warnings=tuple(warnings),
    )
