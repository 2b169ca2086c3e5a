"""Instrument definitions, response sets and the bundled questionnaires.

A :class:`MaturityModel` is an ordered list of levels, each owning zero or
more Likert items, plus the response scale and the threshold rule used to
decide whether a level is attained. Everything here is an immutable value;
validation is a separate step (:func:`validate_model`) so that broken models
can still be built and inspected.
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from importlib import resources
from typing import Any, Iterable, Iterator, Mapping

__all__ = [
    "ChecklistEntry",
    "ChecklistSection",
    "ChecklistState",
    "ChecklistTemplate",
    "Grouping",
    "Item",
    "Level",
    "MaturityModel",
    "ModelError",
    "ResponseScale",
    "ResponseSet",
    "ScaleOption",
    "ThresholdRule",
    "Violation",
    "builtin_checklist",
    "builtin_model",
    "builtin_models",
    "format_timestamp",
    "parse_checklist_state",
    "parse_checklist_template",
    "parse_model",
    "parse_responses",
    "parse_timestamp",
    "serialize_checklist_state",
    "serialize_checklist_template",
    "serialize_model",
    "serialize_responses",
    "validate_model",
]

BUILTIN_MODEL_IDS = ("rmgp-v1", "pmmm-lifecycle")
FRACTION_OF_MAX = "fraction_of_max"
NO_THRESHOLD = "none"


class ModelError(ValueError):
    """Raised when a model, response or checklist file cannot be accepted."""


# -- timestamps ---------------------------------------------------------------


_FRACTIONAL_SECONDS = re.compile(r"(?<=:\d\d)\.\d+")


def parse_timestamp(text: str) -> datetime:
    """Parse an RFC-3339 UTC timestamp; sub-second digits are dropped."""
    if not isinstance(text, str) or "T" not in text:
        raise ModelError(f"invalid timestamp {text!r}")
    raw = text[:-1] + "+00:00" if text.endswith(("Z", "z")) else text
    raw = _FRACTIONAL_SECONDS.sub("", raw)
    try:
        value = datetime.fromisoformat(raw)
    except ValueError as exc:
        raise ModelError(f"invalid timestamp {text!r}") from exc
    if value.tzinfo is None or value.utcoffset() != timezone.utc.utcoffset(None):
        raise ModelError(f"timestamp {text!r} must be UTC")
    return value.astimezone(timezone.utc).replace(microsecond=0)


def format_timestamp(value: datetime) -> str:
    if value.tzinfo is None:
        raise ValueError("naive datetime")
    return value.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def utc_now() -> datetime:
    return datetime.now(timezone.utc).replace(microsecond=0)


# -- domain types -------------------------------------------------------------


@dataclass(frozen=True)
class ScaleOption:
    label: str
    points: int


@dataclass(frozen=True)
class ResponseScale:
    options: tuple[ScaleOption, ...]

    @property
    def max_points(self) -> int:
        return max(o.points for o in self.options)

    @property
    def min_points(self) -> int:
        return min(o.points for o in self.options)

    def points_for(self, label: str) -> int:
        """Points for *label*, matched case-sensitively after trimming."""
        wanted = label.strip()
        for option in self.options:
            if option.label.strip() == wanted:
                return option.points
        raise KeyError(label)

    def label_for(self, points: int) -> str:
        for option in self.options:
            if option.points == points:
                return option.label
        raise KeyError(points)


@dataclass(frozen=True)
class Item:
    id: str
    prompt: str
    level_index: int
    prompt_en: str | None = None


@dataclass(frozen=True)
class Level:
    index: int
    name: str
    characteristics: tuple[str, ...] = ()
    items: tuple[Item, ...] = ()

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.id for item in self.items)


@dataclass(frozen=True)
class ThresholdRule:
    kind: str
    fraction: Fraction | None = None

    def required_points(self, n_items: int, max_points: int) -> int | None:
        """Minimum points for a level of *n_items* items, or None without a threshold."""
        if self.kind != FRACTION_OF_MAX:
            return None
        return math.ceil(self.fraction * n_items * max_points)


@dataclass(frozen=True)
class Grouping:
    name: str
    item_ids: tuple[str, ...]


@dataclass(frozen=True)
class MaturityModel:
    id: str
    name: str
    scale: ResponseScale
    levels: tuple[Level, ...]
    threshold: ThresholdRule
    groupings: tuple[Grouping, ...] = ()

    @property
    def items(self) -> tuple[Item, ...]:
        return tuple(item for level in self.levels for item in level.items)

    @property
    def item_ids(self) -> tuple[str, ...]:
        return tuple(item.id for item in self.items)

    def level(self, index: int) -> Level:
        for level in self.levels:
            if level.index == index:
                return level
        raise KeyError(index)

    def item(self, item_id: str) -> Item:
        for item in self.items:
            if item.id == item_id:
                return item
        raise KeyError(item_id)


@dataclass(frozen=True)
class ResponseSet:
    model_id: str
    respondent: str
    answers: Mapping[str, str]
    recorded_at: datetime

    def __post_init__(self) -> None:
        object.__setattr__(self, "answers", _FrozenDict(self.answers))


class _FrozenDict(dict):
    """Hashable, read-only dict used for answer maps."""

    def _readonly(self, *args: Any, **kwargs: Any) -> None:
        raise TypeError("answers are read-only")

    __setitem__ = __delitem__ = clear = pop = popitem = setdefault = update = _readonly  # type: ignore[assignment]

    def __hash__(self) -> int:  # type: ignore[override]
        return hash(tuple(sorted(self.items())))


# -- validation ---------------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    code: str
    subject: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


def validate_model(model: MaturityModel) -> list[Violation]:
    """Return every invariant violation found in *model* (empty when valid)."""
    out: list[Violation] = []

    options = model.scale.options
    if len(options) < 2:
        out.append(Violation("scale", "scale", f"scale needs at least 2 options, has {len(options)}"))
    seen_labels: set[str] = set()
    seen_points: set[int] = set()
    for opt in options:
        label = opt.label.strip()
        if not label:
            out.append(Violation("empty-label", repr(opt.label), "scale option label is empty"))
        elif label in seen_labels:
            out.append(Violation("duplicate-label", label, f"duplicate scale label {label!r}"))
        seen_labels.add(label)
        if opt.points in seen_points:
            out.append(Violation("duplicate-points", str(opt.points), f"duplicate scale points {opt.points}"))
        seen_points.add(opt.points)

    seen_levels: set[int] = set()
    for position, level in enumerate(model.levels, start=1):
        if level.index != position:
            what = "duplicate" if level.index in seen_levels else "out-of-sequence"
            out.append(
                Violation(
                    "level-sequence",
                    str(level.index),
                    f"{what} level index {level.index} at position {position} (expected {position})",
                )
            )
        seen_levels.add(level.index)

    seen_items: set[str] = set()
    for level in model.levels:
        for item in level.items:
            if not item.id or any(ch.isspace() for ch in item.id):
                out.append(Violation("item-id", item.id, f"invalid item id {item.id!r}"))
            elif item.id in seen_items:
                out.append(Violation("duplicate-item", item.id, f"duplicate item id {item.id!r}"))
            seen_items.add(item.id)
            if item.level_index != level.index:
                out.append(
                    Violation(
                        "item-level",
                        item.id,
                        f"item {item.id!r} claims level {item.level_index} but sits in level {level.index}",
                    )
                )

    rule = model.threshold
    if rule.kind == FRACTION_OF_MAX:
        if rule.fraction is None or not (0 < rule.fraction <= 1):
            out.append(Violation("threshold", "threshold", f"threshold fraction {rule.fraction} outside (0, 1]"))
    elif rule.kind == NO_THRESHOLD:
        if rule.fraction is not None:
            out.append(Violation("threshold", "threshold", "threshold kind 'none' must not carry a fraction"))
    else:
        out.append(Violation("threshold", "threshold", f"unknown threshold kind {rule.kind!r}"))

    grouped: dict[str, str] = {}
    names: set[str] = set()
    for grouping in model.groupings:
        if grouping.name in names:
            out.append(Violation("duplicate-grouping", grouping.name, f"duplicate grouping {grouping.name!r}"))
        names.add(grouping.name)
        for item_id in grouping.item_ids:
            if item_id not in seen_items:
                out.append(
                    Violation(
                        "dangling-reference",
                        item_id,
                        f"grouping {grouping.name!r} references unknown item {item_id!r}",
                    )
                )
            elif item_id in grouped:
                out.append(
                    Violation(
                        "regrouped-item",
                        item_id,
                        f"item {item_id!r} is in groupings {grouped[item_id]!r} and {grouping.name!r}",
                    )
                )
            else:
                grouped[item_id] = grouping.name
    return out


# -- model file format --------------------------------------------------------


def _load_json(source: bytes | str, what: str) -> Any:
    if isinstance(source, bytes):
        try:
            source = source.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ModelError(f"{what}: not UTF-8 ({exc})") from exc
    try:
        return json.loads(source)
    except json.JSONDecodeError as exc:
        raise ModelError(f"{what}: malformed JSON at line {exc.lineno} column {exc.colno}: {exc.msg}") from exc


def _dump_json(obj: Any) -> bytes:
    return (json.dumps(obj, ensure_ascii=False, indent=2) + "\n").encode("utf-8")


class _Reader:
    """Strict accessor that reports the JSON path of whatever goes wrong."""

    def __init__(self, what: str) -> None:
        self.what = what

    def fail(self, path: str, message: str) -> ModelError:
        return ModelError(f"{self.what}: {path}: {message}")

    def obj(self, value: Any, path: str, required: set[str], optional: frozenset[str] | set[str] = frozenset()) -> dict:
        if not isinstance(value, dict):
            raise self.fail(path, "expected an object")
        unknown = set(value) - required - set(optional)
        if unknown:
            raise self.fail(path, f"unknown key(s) {', '.join(sorted(unknown))}")
        missing = required - set(value)
        if missing:
            raise self.fail(path, f"missing key(s) {', '.join(sorted(missing))}")
        return value

    def list(self, value: Any, path: str) -> list:
        if not isinstance(value, list):
            raise self.fail(path, "expected an array")
        return value

    def str(self, value: Any, path: str) -> str:
        if not isinstance(value, str):
            raise self.fail(path, "expected a string")
        return value

    def int(self, value: Any, path: str) -> int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise self.fail(path, "expected an integer")
        return value


def parse_model(source: bytes | str) -> MaturityModel:
    """Parse and validate a model file; raises :class:`ModelError` with the offending location."""
    r = _Reader("model")
    doc = r.obj(_load_json(source, "model"), "$", {"id", "name", "scale", "levels", "threshold"}, {"groupings"})

    scale_doc = r.obj(doc["scale"], "$.scale", {"options"})
    options = []
    labels: set[str] = set()
    points: set[int] = set()
    for i, opt in enumerate(r.list(scale_doc["options"], "$.scale.options")):
        path = f"$.scale.options[{i}]"
        opt = r.obj(opt, path, {"label", "points"})
        option = ScaleOption(r.str(opt["label"], path + ".label"), r.int(opt["points"], path + ".points"))
        if option.label.strip() in labels:
            raise r.fail(path, f"duplicate option label {option.label!r}")
        if option.points in points:
            raise r.fail(path, f"duplicate option points {option.points}")
        labels.add(option.label.strip())
        points.add(option.points)
        options.append(option)

    levels = []
    level_indices: set[int] = set()
    item_ids: set[str] = set()
    for i, lv in enumerate(r.list(doc["levels"], "$.levels")):
        path = f"$.levels[{i}]"
        lv = r.obj(lv, path, {"index", "name", "characteristics", "items"})
        index = r.int(lv["index"], path + ".index")
        if index in level_indices:
            raise r.fail(path, f"duplicate level index {index}")
        level_indices.add(index)
        chars = tuple(
            r.str(c, f"{path}.characteristics[{j}]")
            for j, c in enumerate(r.list(lv["characteristics"], path + ".characteristics"))
        )
        items = []
        for j, it in enumerate(r.list(lv["items"], path + ".items")):
            ipath = f"{path}.items[{j}]"
            it = r.obj(it, ipath, {"id", "prompt"}, {"prompt_en"})
            item_id = r.str(it["id"], ipath + ".id")
            if item_id in item_ids:
                raise r.fail(ipath, f"duplicate item id {item_id!r}")
            item_ids.add(item_id)
            prompt_en = it.get("prompt_en")
            if prompt_en is not None:
                prompt_en = r.str(prompt_en, ipath + ".prompt_en")
            items.append(Item(item_id, r.str(it["prompt"], ipath + ".prompt"), index, prompt_en))
        levels.append(Level(index, r.str(lv["name"], path + ".name"), chars, tuple(items)))

    th = doc["threshold"]
    kind = r.str(r.obj(th, "$.threshold", {"kind"}, {"fraction_num", "fraction_den"})["kind"], "$.threshold.kind")
    if kind == FRACTION_OF_MAX:
        r.obj(th, "$.threshold", {"kind", "fraction_num", "fraction_den"})
        num = r.int(th["fraction_num"], "$.threshold.fraction_num")
        den = r.int(th["fraction_den"], "$.threshold.fraction_den")
        if den <= 0:
            raise r.fail("$.threshold.fraction_den", "must be positive")
        fraction = Fraction(num, den)
        if not (0 < fraction <= 1):
            raise r.fail("$.threshold", f"fraction {fraction} outside (0, 1]")
        threshold = ThresholdRule(kind, fraction)
    elif kind == NO_THRESHOLD:
        r.obj(th, "$.threshold", {"kind"})
        threshold = ThresholdRule(kind)
    else:
        raise r.fail("$.threshold.kind", f"unknown kind {kind!r}")

    groupings = []
    for i, g in enumerate(r.list(doc.get("groupings", []), "$.groupings")):
        path = f"$.groupings[{i}]"
        g = r.obj(g, path, {"name", "items"})
        ids = tuple(r.str(x, f"{path}.items[{j}]") for j, x in enumerate(r.list(g["items"], path + ".items")))
        groupings.append(Grouping(r.str(g["name"], path + ".name"), ids))

    model = MaturityModel(
        id=r.str(doc["id"], "$.id"),
        name=r.str(doc["name"], "$.name"),
        scale=ResponseScale(tuple(options)),
        levels=tuple(levels),
        threshold=threshold,
        groupings=tuple(groupings),
    )
    if not model.id.strip():
        raise r.fail("$.id", "empty model id")
    violations = validate_model(model)
    if violations:
        raise ModelError("model: " + "; ".join(str(v) for v in violations))
    return model


def model_to_dict(model: MaturityModel) -> dict:
    doc: dict[str, Any] = {
        "id": model.id,
        "name": model.name,
        "scale": {"options": [{"label": o.label, "points": o.points} for o in model.scale.options]},
        "levels": [],
    }
    for level in model.levels:
        items = []
        for item in level.items:
            entry = {"id": item.id, "prompt": item.prompt}
            if item.prompt_en is not None:
                entry["prompt_en"] = item.prompt_en
            items.append(entry)
        doc["levels"].append(
            {
                "index": level.index,
                "name": level.name,
                "characteristics": list(level.characteristics),
                "items": items,
            }
        )
    if model.threshold.kind == FRACTION_OF_MAX:
        doc["threshold"] = {
            "kind": FRACTION_OF_MAX,
            "fraction_num": model.threshold.fraction.numerator,
            "fraction_den": model.threshold.fraction.denominator,
        }
    else:
        doc["threshold"] = {"kind": model.threshold.kind}
    if model.groupings:
        doc["groupings"] = [{"name": g.name, "items": list(g.item_ids)} for g in model.groupings]
    return doc


def serialize_model(model: MaturityModel) -> bytes:
    return _dump_json(model_to_dict(model))


# -- response file format -----------------------------------------------------


def parse_responses(source: bytes | str) -> list[ResponseSet]:
    """Parse a response file. Labels are kept verbatim; nothing is checked against a model here."""
    r = _Reader("responses")
    doc = r.obj(_load_json(source, "responses"), "$", {"model", "responses"})
    model_id = r.str(doc["model"], "$.model")
    out = []
    for i, entry in enumerate(r.list(doc["responses"], "$.responses")):
        path = f"$.responses[{i}]"
        entry = r.obj(entry, path, {"respondent", "recorded_at", "answers"})
        answers_doc = entry["answers"]
        if not isinstance(answers_doc, dict):
            raise r.fail(path + ".answers", "expected an object")
        answers = {}
        for key, label in answers_doc.items():
            answers[key] = r.str(label, f"{path}.answers.{key}")
        try:
            recorded_at = parse_timestamp(entry["recorded_at"])
        except ModelError as exc:
            raise r.fail(path + ".recorded_at", str(exc)) from exc
        out.append(ResponseSet(model_id, r.str(entry["respondent"], path + ".respondent"), answers, recorded_at))
    return out


def serialize_responses(responses: Iterable[ResponseSet], model_id: str | None = None) -> bytes:
    responses = list(responses)
    ids = {rs.model_id for rs in responses}
    if model_id is None:
        if len(ids) != 1:
            raise ValueError("cannot infer a single model id; pass model_id")
        model_id = ids.pop()
    elif ids - {model_id}:
        raise ValueError(f"responses reference models other than {model_id!r}")
    doc = {
        "model": model_id,
        "responses": [
            {
                "respondent": rs.respondent,
                "recorded_at": format_timestamp(rs.recorded_at),
                "answers": dict(rs.answers),
            }
            for rs in responses
        ],
    }
    return _dump_json(doc)


# -- checklist ----------------------------------------------------------------


@dataclass(frozen=True)
class ChecklistSection:
    name: str
    items: tuple[str, ...]


@dataclass(frozen=True)
class ChecklistTemplate:
    name: str
    sections: tuple[ChecklistSection, ...]

    def coordinates(self) -> Iterator[tuple[str, int]]:
        for section in self.sections:
            for i in range(len(section.items)):
                yield section.name, i

    @property
    def total_items(self) -> int:
        return sum(len(s.items) for s in self.sections)

    def section(self, name: str) -> ChecklistSection:
        for section in self.sections:
            if section.name == name:
                return section
        raise KeyError(name)


@dataclass(frozen=True)
class ChecklistEntry:
    done: bool
    at: datetime


@dataclass(frozen=True)
class ChecklistState:
    entries: Mapping[tuple[str, int], ChecklistEntry] = field(default_factory=dict)

    def __post_init__(self) -> None:
        object.__setattr__(self, "entries", _FrozenDict(self.entries))

    def is_done(self, section: str, index: int) -> bool:
        entry = self.entries.get((section, index))
        return bool(entry and entry.done)

    def done_count(self, template: ChecklistTemplate) -> int:
        return sum(1 for coord in template.coordinates() if self.is_done(*coord))

    def completion(self, template: ChecklistTemplate) -> Fraction:
        """Fraction of template items marked done."""
        total = template.total_items
        return Fraction(self.done_count(template), total) if total else Fraction(1)

    def toggle(self, template: ChecklistTemplate, key: str, at: datetime) -> ChecklistState:
        section, index = parse_checklist_key(key, template)
        entries = dict(self.entries)
        entries[(section, index)] = ChecklistEntry(not self.is_done(section, index), at)
        return ChecklistState(entries)


def parse_checklist_key(key: str, template: ChecklistTemplate) -> tuple[str, int]:
    section, sep, index = key.rpartition("/")
    if not sep or not index.isdigit():
        raise ModelError(f"checklist key {key!r} is not of the form 'section/index'")
    try:
        items = template.section(section).items
    except KeyError:
        raise ModelError(f"unknown checklist section {section!r}") from None
    if int(index) >= len(items):
        raise ModelError(f"checklist section {section!r} has no item {index}")
    return section, int(index)


def parse_checklist_template(source: bytes | str) -> ChecklistTemplate:
    r = _Reader("checklist")
    doc = r.obj(_load_json(source, "checklist"), "$", {"name", "sections"})
    sections = []
    for i, s in enumerate(r.list(doc["sections"], "$.sections")):
        path = f"$.sections[{i}]"
        s = r.obj(s, path, {"name", "items"})
        name = r.str(s["name"], path + ".name")
        if "/" in name:
            raise r.fail(path + ".name", "section names may not contain '/'")
        items = tuple(r.str(x, f"{path}.items[{j}]") for j, x in enumerate(r.list(s["items"], path + ".items")))
        sections.append(ChecklistSection(name, items))
    return ChecklistTemplate(r.str(doc["name"], "$.name"), tuple(sections))


def serialize_checklist_template(template: ChecklistTemplate) -> bytes:
    return _dump_json(
        {
            "name": template.name,
            "sections": [{"name": s.name, "items": list(s.items)} for s in template.sections],
        }
    )


def parse_checklist_state(source: bytes | str, template: ChecklistTemplate) -> ChecklistState:
    r = _Reader("checklist state")
    doc = _load_json(source, "checklist state")
    if not isinstance(doc, dict):
        raise r.fail("$", "expected an object")
    entries = {}
    for key, value in doc.items():
        path = f"$.{key}"
        try:
            coord = parse_checklist_key(key, template)
        except ModelError as exc:
            raise r.fail(path, str(exc)) from exc
        value = r.obj(value, path, {"done", "at"})
        if not isinstance(value["done"], bool):
            raise r.fail(path + ".done", "expected a boolean")
        try:
            at = parse_timestamp(value["at"])
        except ModelError as exc:
            raise r.fail(path + ".at", str(exc)) from exc
        entries[coord] = ChecklistEntry(value["done"], at)
    return ChecklistState(entries)


def serialize_checklist_state(state: ChecklistState, template: ChecklistTemplate) -> bytes:
    doc = {}
    for section, index in template.coordinates():
        entry = state.entries.get((section, index))
        if entry is not None:
            doc[f"{section}/{index}"] = {"done": entry.done, "at": format_timestamp(entry.at)}
    return _dump_json(doc)


# -- bundled artifacts --------------------------------------------------------


def _data(name: str) -> bytes:
    return resources.files("riskmaturity").joinpath("data", name).read_bytes()


def builtin_models() -> list[MaturityModel]:
    return [parse_model(_data(f"{model_id}.json")) for model_id in BUILTIN_MODEL_IDS]


def builtin_model(model_id: str) -> MaturityModel:
    if model_id not in BUILTIN_MODEL_IDS:
        raise KeyError(model_id)
    return parse_model(_data(f"{model_id}.json"))


def builtin_checklist() -> ChecklistTemplate:
    return parse_checklist_template(_data("risk-process-checklist.json"))
