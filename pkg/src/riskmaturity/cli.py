"""Command-line entry point.

Exit codes: 0 success, 1 data or validation error, 2 usage error.
"""

from __future__ import annotations

import argparse
import json
import os
import re
import sys
import tempfile
from datetime import datetime
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from .model import (
    BUILTIN_MODEL_IDS,
    ChecklistState,
    MaturityModel,
    ModelError,
    ResponseSet,
    builtin_checklist,
    builtin_model,
    builtin_models,
    parse_checklist_state,
    parse_model,
    parse_responses,
    parse_timestamp,
    serialize_checklist_state,
    serialize_responses,
    utc_now,
)
from .report import gap_lines, render, render_trend
from .scoring import (
    ScoringError,
    aggregate,
    determine_level,
    gap_analysis,
    score_assessment,
    score_levels,
)
from .storage import StorageError, load_history, store

PROG = "riskmaturity"


class DataError(Exception):
    """Bad input data; maps to exit code 1."""


class UsageError(Exception):
    """Bad invocation detected after argument parsing; maps to exit code 2."""


# -- helpers ------------------------------------------------------------------


def _now() -> datetime:
    override = os.environ.get("PRODUCED_AT")
    if override:
        try:
            return parse_timestamp(override)
        except ModelError as exc:
            raise UsageError(f"PRODUCED_AT: {exc}") from None
    return utc_now()


def _load_model(source: str | None) -> MaturityModel:
    if not source:
        raise UsageError("--model is required")
    if source.startswith("builtin:"):
        model_id = source[len("builtin:"):]
        if model_id not in BUILTIN_MODEL_IDS:
            raise UsageError(f"unknown builtin model {model_id!r}; choose from {', '.join(BUILTIN_MODEL_IDS)}")
        return builtin_model(model_id)
    path = Path(source)
    if path.exists():
        try:
            return parse_model(path.read_bytes())
        except ModelError as exc:
            raise DataError(f"{path}: {exc}") from None
    if source in BUILTIN_MODEL_IDS:
        return builtin_model(source)
    raise DataError(f"model file {source} not found")


def _load_responses(paths: Sequence[str] | None) -> list[ResponseSet]:
    if not paths:
        raise UsageError("--responses is required")
    out = []
    for name in paths:
        path = Path(name)
        try:
            out.extend(parse_responses(path.read_bytes()))
        except OSError as exc:
            raise DataError(f"cannot read {path}: {exc.strerror}") from None
        except ModelError as exc:
            raise DataError(f"{path}: {exc}") from None
    if not out:
        raise DataError("response files contain no responses")
    return out


def _emit(data: bytes, out: str | None) -> None:
    if out:
        _atomic_write(Path(out), data)
    else:
        sys.stdout.write(data.decode("utf-8"))
        sys.stdout.flush()


def _atomic_write(path: Path, data: bytes) -> None:
    directory = path.parent if str(path.parent) else Path(".")
    try:
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".part", dir=directory)
    except OSError as exc:
        raise DataError(f"cannot write {path}: {exc.strerror}") from None
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise


def _require_format(args: argparse.Namespace, allowed: Sequence[str], default: str) -> str:
    fmt = args.format or default
    if fmt not in allowed:
        raise UsageError(f"{args.command}: --format must be one of {', '.join(allowed)}")
    return fmt


def option_numbers(model: MaturityModel) -> list[tuple[int, str, int]]:
    """(number typed, label, points) for each option, in ascending point order.

    Non-negative scales are numbered by their points; bipolar scales 1..n.
    """
    options = sorted(model.scale.options, key=lambda o: o.points)
    if model.scale.min_points >= 0:
        return [(o.points, o.label, o.points) for o in options]
    return [(i, o.label, o.points) for i, o in enumerate(options, start=1)]


# -- commands -----------------------------------------------------------------


def cmd_list_models(args: argparse.Namespace) -> int:
    fmt = _require_format(args, ("text", "json"), "text")
    models = builtin_models()
    if fmt == "json":
        rows = [{"id": m.id, "name": m.name, "items": len(m.items), "levels": len(m.levels)} for m in models]
        _emit((json.dumps(rows, ensure_ascii=False, indent=2) + "\n").encode("utf-8"), args.out)
        return 0
    lines = [f"{'ID':<16}{'Items':>6}  Name"]
    lines += [f"{m.id:<16}{len(m.items):>6}  {m.name}" for m in models]
    _emit(("\n".join(lines) + "\n").encode("utf-8"), args.out)
    return 0


def response_issues(model: MaturityModel, responses: Sequence[ResponseSet]) -> list[str]:
    issues = []
    for rs in responses:
        who = rs.respondent
        if rs.model_id != model.id:
            issues.append(f"{who}: response is for model {rs.model_id!r}, not {model.id!r}")
            continue
        for item_id, label in rs.answers.items():
            if item_id not in model.item_ids:
                issues.append(f"{who}: unknown item {item_id}")
                continue
            try:
                model.scale.points_for(label)
            except KeyError:
                issues.append(f"{who}: item {item_id} has unknown label {label!r}")
        missing = [i for i in model.item_ids if i not in rs.answers]
        if missing:
            issues.append(f"{who}: missing item(s) {', '.join(missing)}")
    return issues


def cmd_validate(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    print(f"model {model.id}: ok ({len(model.levels)} levels, {len(model.items)} items)")
    if args.responses:
        responses = _load_responses(args.responses)
        issues = response_issues(model, responses)
        for issue in issues:
            print(f"error: {issue}", file=sys.stderr)
        if issues:
            return 1
        print(f"responses: ok ({len(responses)} respondent(s))")
    return 0


def _slug(text: str) -> str:
    return re.sub(r"[^A-Za-z0-9_.-]+", "-", text).strip("-") or "respondent"


def cmd_administer(args: argparse.Namespace) -> int:
    model = _load_model(args.model)
    respondent = args.respondent
    if not respondent:
        raise UsageError("administer: --respondent is required")
    out = Path(args.out or f"{model.id}-{_slug(respondent)}.json")
    numbering = option_numbers(model)
    by_number = {number: label for number, label, _ in numbering}
    choices = ", ".join(str(n) for n, _, _ in numbering)

    print(f"{model.name} ({len(model.items)} items)")
    answers: dict[str, str] = {}
    for level in model.levels:
        if not level.items:
            continue
        print(f"\nLevel {level.index}: {level.name}")
        for item in level.items:
            print(f"\n[{item.id}] {item.prompt}")
            if args.english and item.prompt_en:
                print(f"        {item.prompt_en}")
            for number, label, points in numbering:
                print(f"  {number}) {label} ({points:+d})" if model.scale.min_points < 0 else f"  {number}) {label}")
            while True:
                sys.stdout.write("> ")
                sys.stdout.flush()
                line = sys.stdin.readline()
                if not line:
                    print("\nerror: input ended before the questionnaire was complete; nothing written", file=sys.stderr)
                    return 1
                text = line.strip()
                if re.fullmatch(r"[+-]?\d+", text) and int(text) in by_number:
                    answers[item.id] = by_number[int(text)]
                    break
                print(f"invalid choice {text!r}; enter one of {choices}")

    response = ResponseSet(model.id, respondent, answers, _now())
    _atomic_write(out, serialize_responses([response]))
    print(f"\nwrote {out}")
    return 0


def _score(args: argparse.Namespace):
    model = _load_model(args.model)
    responses = _load_responses(args.responses)
    try:
        report = score_assessment(
            model, responses, missing_as_minimum=args.missing_as_minimum, produced_at=_now()
        )
    except ScoringError as exc:
        raise DataError(str(exc)) from None
    return model, responses, report


def cmd_score(args: argparse.Namespace) -> int:
    fmt = _require_format(args, ("text", "json", "svg"), "text")
    flag = None
    if args.flag_below is not None:
        try:
            flag = Fraction(args.flag_below)
        except ValueError:
            raise UsageError(f"--flag-below: not a number: {args.flag_below!r}") from None
    _, _, report = _score(args)
    for warning in report.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    _emit(render(report, fmt, flag_below=flag).data, args.out)
    if args.store:
        record = store(args.store, report, stored_at=_now())
        print(f"stored {record.path}", file=sys.stderr)
    return 0


def cmd_gap(args: argparse.Namespace) -> int:
    fmt = _require_format(args, ("text", "json"), "text")
    model = _load_model(args.model)
    responses = _load_responses(args.responses)
    try:
        answers = aggregate(responses, model, missing_as_minimum=args.missing_as_minimum)
        if args.level is None:
            achieved = determine_level(model, score_levels(model, answers))
            if achieved >= len(model.levels):
                _emit(f"Already at level {achieved}, the top level.\n".encode(), args.out)
                return 0
            target = achieved + 1
        else:
            target = args.level
        plan = gap_analysis(model, answers, target)
    except ScoringError as exc:
        raise DataError(str(exc)) from None
    if fmt == "json":
        doc = {
            "target": plan.target_level,
            "deficit_num": plan.deficit_points.numerator,
            "deficit_den": plan.deficit_points.denominator,
            "upgrades": [
                {"item": u.item_id, "from": str(u.current), "to": u.proposed} for u in plan.upgrades
            ],
        }
        _emit((json.dumps(doc, indent=2) + "\n").encode("utf-8"), args.out)
    else:
        _emit(("\n".join(gap_lines(plan)) + "\n").encode("utf-8"), args.out)
    return 0


def _model_id(source: str | None) -> str:
    if not source:
        raise UsageError("--model is required")
    if source.startswith("builtin:"):
        return source[len("builtin:"):]
    if Path(source).is_file():
        return _load_model(source).id
    return source


def cmd_trend(args: argparse.Namespace) -> int:
    fmt = _require_format(args, ("text", "svg"), "text")
    if not args.store:
        raise UsageError("trend: --store <dir> is required")
    model_id = _model_id(args.model)
    try:
        history = load_history(args.store, model_id)
    except StorageError as exc:
        raise DataError(str(exc)) from None
    for warning in history.warnings:
        print(f"warning: {warning}", file=sys.stderr)
    entries = [(ts, level) for ts, level in history if level is not None]
    if not entries:
        print("no assessments")
        return 0
    _emit(render_trend(entries, fmt).data, args.out)
    return 0


def cmd_checklist(args: argparse.Namespace) -> int:
    fmt = _require_format(args, ("text", "json"), "text")
    template = builtin_checklist()
    state_path = Path(args.state)
    if state_path.exists():
        try:
            state = parse_checklist_state(state_path.read_bytes(), template)
        except ModelError as exc:
            raise DataError(f"{state_path}: {exc}") from None
    else:
        state = ChecklistState()
    if args.toggle:
        try:
            state = state.toggle(template, args.toggle, _now())
        except ModelError as exc:
            raise DataError(str(exc)) from None
        _atomic_write(state_path, serialize_checklist_state(state, template))

    done, total = state.done_count(template), template.total_items
    pct = float(100 * state.completion(template))
    if fmt == "json":
        doc = {
            "done": done,
            "total": total,
            "percentage": round(pct, 3),
            "sections": [
                {
                    "name": s.name,
                    "items": [
                        {"index": i, "text": text, "done": state.is_done(s.name, i)} for i, text in enumerate(s.items)
                    ],
                }
                for s in template.sections
            ],
        }
        _emit((json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8"), args.out)
        return 0
    lines = [template.name]
    for s in template.sections:
        lines.append(f"\n{s.name}")
        for i, text in enumerate(s.items):
            mark = "x" if state.is_done(s.name, i) else " "
            lines.append(f"  [{mark}] {s.name}/{i}  {text}")
    lines.append(f"\nCompletion: {done}/{total} ({pct:.1f}%)")
    _emit(("\n".join(lines) + "\n").encode("utf-8"), args.out)
    return 0


# -- parser -------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--model", help="builtin:<id> or path to a model file")
    common.add_argument("--responses", nargs="+", metavar="FILE", help="response file(s)")
    common.add_argument("--format", choices=["text", "json", "svg"], help="output format")
    common.add_argument("--out", help="write output here instead of standard output")
    common.add_argument("--store", metavar="DIR", help="record directory for assessment history")
    common.add_argument(
        "--missing-as-minimum",
        action="store_true",
        help="score unanswered items at the scale minimum instead of failing",
    )

    parser = argparse.ArgumentParser(prog=PROG, description="Risk-management maturity assessment.")
    sub = parser.add_subparsers(dest="command", metavar="COMMAND", required=True)

    p = sub.add_parser("list-models", parents=[common], help="list bundled instruments")
    p.set_defaults(func=cmd_list_models)

    p = sub.add_parser("validate", parents=[common], help="validate a model and optional response files")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("administer", parents=[common], help="answer a questionnaire interactively")
    p.add_argument("--respondent", required=True)
    p.add_argument("--english", action="store_true", help="also show English prompts")
    p.set_defaults(func=cmd_administer)

    p = sub.add_parser("score", parents=[common], help="score response files")
    p.add_argument("--flag-below", metavar="N", help="mark grouping totals below N in text output")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("gap", parents=[common], help="minimal improvement plan for a level")
    p.add_argument("--level", type=int, help="target level (default: one above the achieved level)")
    p.set_defaults(func=cmd_gap)

    p = sub.add_parser("trend", parents=[common], help="achieved level over stored assessments")
    p.set_defaults(func=cmd_trend)

    p = sub.add_parser("checklist", parents=[common], help="show or update the risk process checklist")
    p.add_argument("--state", default="checklist-state.json", help="checklist state file")
    p.add_argument("--toggle", metavar="SECTION/INDEX", help="flip one item's done flag")
    p.set_defaults(func=cmd_checklist)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"{PROG}: error: {exc}", file=sys.stderr)
        return 2
    except (DataError, ModelError, ScoringError, StorageError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


def run() -> None:
    sys.exit(main())
