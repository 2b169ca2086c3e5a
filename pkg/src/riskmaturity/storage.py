"""Append-only record directory for assessment reports.

Each record is one JSON file ``<stored_at>_<id>.json`` holding
``{stored_at, id, report}``. The id is the SHA-256 of the canonical JSON
report, so identical reports share an id while every store adds a new file.
"""

from __future__ import annotations

import hashlib
import json
import os
import tempfile
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Iterator

from .model import ModelError, format_timestamp, parse_timestamp, utc_now
from .report import render, report_from_dict, report_to_dict
from .scoring import AssessmentReport

__all__ = ["AssessmentRecord", "History", "StorageError", "load_history", "load_records", "record_id", "store"]


class StorageError(OSError):
    pass


@dataclass(frozen=True)
class AssessmentRecord:
    id: str
    report: AssessmentReport
    stored_at: datetime
    path: Path | None = field(default=None, compare=False)


@dataclass
class History:
    entries: list[tuple[datetime, int | None]]
    warnings: list[str]

    def __iter__(self) -> Iterator[tuple[datetime, int | None]]:
        return iter(self.entries)

    def __len__(self) -> int:
        return len(self.entries)


def record_id(report: AssessmentReport) -> str:
    return hashlib.sha256(render(report, "json").data).hexdigest()


def _filename(stored_at: datetime, rid: str) -> str:
    return f"{stored_at.strftime('%Y%m%dT%H%M%SZ')}_{rid}.json"


def store(record_dir: str | os.PathLike, report: AssessmentReport, *, stored_at: datetime | None = None) -> AssessmentRecord:
    """Write a new record. Never overwrites: a name clash moves ``stored_at`` forward one second."""
    directory = Path(record_dir)
    if not directory.is_dir():
        raise StorageError(f"record directory {directory} does not exist")
    rid = record_id(report)
    when = (stored_at or utc_now()).replace(microsecond=0)
    while (directory / _filename(when, rid)).exists():
        when += timedelta(seconds=1)
    target = directory / _filename(when, rid)

    doc = {"stored_at": format_timestamp(when), "id": rid, "report": report_to_dict(report)}
    payload = (json.dumps(doc, ensure_ascii=False, indent=2) + "\n").encode("utf-8")
    assert report_from_dict(doc["report"]) == report, "report does not survive serialization"

    try:
        fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".part", dir=directory)
    except OSError as exc:
        raise StorageError(f"cannot write to {directory}: {exc}") from exc
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(payload)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, target)
    except BaseException:
        Path(tmp).unlink(missing_ok=True)
        raise
    return AssessmentRecord(rid, report, when, target)


def load_record(path: str | os.PathLike) -> AssessmentRecord:
    path = Path(path)
    try:
        doc = json.loads(path.read_bytes())
        if not isinstance(doc, dict):
            raise ModelError("record is not a JSON object")
        report = report_from_dict(doc["report"])
        return AssessmentRecord(doc["id"], report, parse_timestamp(doc["stored_at"]), path)
    except (ValueError, KeyError, TypeError) as exc:
        raise ModelError(f"{path.name}: unreadable record ({exc})") from exc


def load_records(record_dir: str | os.PathLike, model_id: str | None = None) -> tuple[list[AssessmentRecord], list[str]]:
    """All readable records (optionally for one model) sorted by (stored_at, id), plus warnings for skipped files."""
    directory = Path(record_dir)
    try:
        names = sorted(p for p in directory.iterdir() if p.suffix == ".json" and not p.name.startswith("."))
    except OSError as exc:
        raise StorageError(f"cannot read record directory {directory}: {exc}") from exc
    records, warnings = [], []
    for path in names:
        try:
            record = load_record(path)
        except (ModelError, OSError) as exc:
            warnings.append(f"skipped {exc}")
            continue
        if model_id is None or record.report.model_id == model_id:
            records.append(record)
    records.sort(key=lambda r: (r.stored_at, r.id))
    return records, warnings


def load_history(record_dir: str | os.PathLike, model_id: str) -> History:
    records, warnings = load_records(record_dir, model_id)
    return History([(r.stored_at, r.report.achieved_level) for r in records], warnings)
