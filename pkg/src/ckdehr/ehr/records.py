"""Visit records and the delimited visit-table format."""

from __future__ import annotations

import csv
import logging
import os
from dataclasses import dataclass, field

log = logging.getLogger(__name__)

COLUMNS = ("patient_id", "visit_time", "diagnosis_codes", "medication_codes", "procedure_codes")
MULTI_SEP = "|"


class SchemaError(ValueError):
    """The visit table lacks a required column or has the wrong format."""

    def __init__(self, message: str, column: str | None = None):
        super().__init__(message)
        self.column = column


class RowError(ValueError):
    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


class DuplicateVisitError(ValueError):
    def __init__(self, patient_id: str, visit_time: int):
        super().__init__(f"duplicate visit key (patient_id={patient_id!r}, visit_time={visit_time})")
        self.key = (patient_id, visit_time)


@dataclass(frozen=True)
class VisitRecord:
    patient_id: str
    visit_time: int
    diagnoses: frozenset[str] = frozenset()
    medications: frozenset[str] = frozenset()
    procedures: frozenset[str] = frozenset()

    @property
    def key(self) -> tuple[str, int]:
        return (self.patient_id, self.visit_time)


@dataclass
class IngestResult:
    records: list[VisitRecord]
    malformed: int = 0
    errors: list[str] = field(default_factory=list)


def _split_multi(cell: str) -> frozenset[str]:
    return frozenset(c.strip() for c in cell.split(MULTI_SEP) if c.strip())


def read_visit_table(path: str | os.PathLike, fmt: str = "csv", lenient: bool = False,
                     allowed_diagnoses: set[str] | None = None) -> IngestResult:
    """Parse a visit table into records grouped by patient and sorted by time.

    Malformed rows raise :class:`RowError` unless ``lenient`` is set, in which
    case they are skipped and counted. Duplicate (patient, time) keys always
    raise. ``allowed_diagnoses``, when given, is the registry plus any
    auxiliary codes; anything else is a malformed row.
    """
    if fmt != "csv":
        raise SchemaError(f"unsupported visit table format {fmt!r}")
    result = IngestResult(records=[])
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        for col in COLUMNS:
            if col not in header:
                raise SchemaError(f"visit table {os.fspath(path)} is missing required column {col!r}", col)
        seen: set[tuple[str, int]] = set()
        for row in reader:
            line = reader.line_num
            try:
                rec = _parse_row(row, line, allowed_diagnoses)
            except RowError as exc:
                if not lenient:
                    raise
                result.malformed += 1
                result.errors.append(str(exc))
                continue
            if rec.key in seen:
                raise DuplicateVisitError(*rec.key)
            seen.add(rec.key)
            result.records.append(rec)
    if result.malformed:
        log.warning("skipped %d malformed visit rows in %s", result.malformed, path)
    result.records = sort_records(result.records)
    return result


def _parse_row(row: dict, line: int, allowed: set[str] | None) -> VisitRecord:
    pid = (row.get("patient_id") or "").strip()
    if not pid:
        raise RowError("empty patient_id", line)
    raw_time = (row.get("visit_time") or "").strip()
    try:
        t = int(raw_time)
    except ValueError:
        raise RowError(f"unparseable visit_time {raw_time!r}", line) from None
    diags = _split_multi(row.get("diagnosis_codes") or "")
    if allowed is not None:
        unknown = sorted(diags - allowed)
        if unknown:
            raise RowError(f"diagnosis codes outside registry: {unknown}", line)
    return VisitRecord(pid, t, diags, _split_multi(row.get("medication_codes") or ""),
                       _split_multi(row.get("procedure_codes") or ""))


def ingest_records(path: str | os.PathLike, fmt: str = "csv", lenient: bool = False) -> list[VisitRecord]:
    return read_visit_table(path, fmt, lenient).records


def sort_records(records: list[VisitRecord]) -> list[VisitRecord]:
    """Group by patient (first-appearance order) and sort each group by time."""
    order: dict[str, int] = {}
    for r in records:
        order.setdefault(r.patient_id, len(order))
    return sorted(records, key=lambda r: (order[r.patient_id], r.visit_time))


def write_visit_table(records: list[VisitRecord], path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(COLUMNS)
        for r in records:
            w.writerow([r.patient_id, r.visit_time,
                        MULTI_SEP.join(sorted(r.diagnoses)),
                        MULTI_SEP.join(sorted(r.medications)),
                        MULTI_SEP.join(sorted(r.procedures))])
