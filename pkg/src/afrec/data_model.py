"""Shared domain types, the canonical feature schema, and interchange formats.

Everything downstream (section parsing, extraction, vectorization, merging,
scoring, evaluation) speaks these types. All of them are immutable after
construction and safe to share across workers.

Interchange formats
-------------------
* Report corpus: JSON lines with keys ``report_id, patient_id, date, body``,
  or a directory of ``.txt`` files plus a CSV sidecar
  ``report_id,patient_id,date,filename``.
* Coded records: CSV ``patient_id,date,code_system,code,value,unit``.
* Feature matrix: CSV whose first two columns are ``patient_id,date`` and
  whose remaining columns follow schema order; a missing cell is an empty
  field.
* Schema file: CSV ``column,kind,cardinality,window_class``.
* Labels file: CSV ``patient_id,label,split,onset_report_id``.

CSV readers skip leading ``#`` comment lines, which the CLI uses to embed
provenance (config hash and seed) in emitted artifacts.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace
from datetime import date as Date
from enum import Enum
from importlib import resources
from pathlib import Path


class CorpusError(ValueError):
    """An input file violates the interchange contract."""


class SchemaError(ValueError):
    """A schema, vector or dataset violates the schema rules."""


# ---------------------------------------------------------------------------
# Reports and sections
# ---------------------------------------------------------------------------

class CanonicalSection(str, Enum):
    """The eight canonical discharge-report sections."""

    REASON_FOR_CONSULTATION = "ReasonForConsultation"
    PAST_MEDICAL_HISTORY = "PastMedicalHistory"
    CURRENT_DISEASE = "CurrentDisease"
    GENERAL_EXPLORATION = "GeneralExploration"
    COMPLEMENTARY_TESTS = "ComplementaryTests"
    DIAGNOSIS = "Diagnosis"
    TREATMENT = "Treatment"
    EVOLUTION = "Evolution"


#: Name of the bucket holding text that no header claimed.
UNSECTIONED = "unsectioned"

_SECTION_NAMES = {s.value for s in CanonicalSection}


@dataclass(frozen=True)
class DischargeReport:
    """One free-text discharge report."""

    report_id: str
    patient_id: str
    date: Date
    body: str

    def __post_init__(self):
        if not self.report_id:
            raise CorpusError("report_id must be non-empty")
        if not self.body:
            raise CorpusError(f"report {self.report_id}: body must be non-empty")


@dataclass(frozen=True)
class Section:
    """A contiguous slice of a report body attributed to one section.

    ``text`` is exactly ``body[start:end]`` (header line included), so the
    concatenation of all section texts in span order reconstructs the body.
    ``content`` strips the matched header.
    """

    name: str  # a CanonicalSection value or UNSECTIONED
    start: int
    end: int
    header_end: int  # content begins here; equals start for unsectioned text
    text: str

    def __post_init__(self):
        if self.name != UNSECTIONED and self.name not in _SECTION_NAMES:
            raise SchemaError(f"unknown section name {self.name!r}")
        if not (self.start <= self.header_end <= self.end):
            raise SchemaError(f"section {self.name}: bad offsets")

    @property
    def content(self) -> str:
        return self.text[self.header_end - self.start:]


@dataclass(frozen=True)
class SectionedReport:
    """A report plus its canonical-section decomposition.

    Sections are ordered by span, non-overlapping, and jointly cover the
    whole body (unsectioned stretches included as UNSECTIONED entries).
    """

    report: DischargeReport
    sections: tuple[Section, ...]

    def __post_init__(self):
        body = self.report.body
        pos = 0
        for sec in self.sections:
            if sec.start != pos:
                raise SchemaError(
                    f"report {self.report.report_id}: section spans must tile the body"
                )
            if sec.text != body[sec.start:sec.end]:
                raise SchemaError(
                    f"report {self.report.report_id}: section text does not match its span"
                )
            pos = sec.end
        if pos != len(body):
            raise SchemaError(
                f"report {self.report.report_id}: section spans must cover the body"
            )

    def named(self, name: CanonicalSection | str) -> list[Section]:
        key = name.value if isinstance(name, CanonicalSection) else name
        return [s for s in self.sections if s.name == key]

    def to_json(self) -> dict:
        return {
            "report_id": self.report.report_id,
            "patient_id": self.report.patient_id,
            "date": self.report.date.isoformat(),
            "body": self.report.body,
            "sections": [
                {"name": s.name, "start": s.start, "end": s.end, "header_end": s.header_end}
                for s in self.sections
            ],
        }

    @classmethod
    def from_json(cls, obj: dict) -> "SectionedReport":
        report = DischargeReport(
            report_id=obj["report_id"],
            patient_id=obj["patient_id"],
            date=Date.fromisoformat(obj["date"]),
            body=obj["body"],
        )
        sections = tuple(
            Section(
                name=s["name"],
                start=s["start"],
                end=s["end"],
                header_end=s["header_end"],
                text=report.body[s["start"]:s["end"]],
            )
            for s in obj["sections"]
        )
        return cls(report=report, sections=sections)


# ---------------------------------------------------------------------------
# Coded EHR records
# ---------------------------------------------------------------------------

class CodeSystem(str, Enum):
    ICD10 = "ICD10"
    ATC = "ATC"
    LAB = "LAB"
    PROC = "PROC"
    DEMOG = "DEMOG"


@dataclass(frozen=True)
class CodedRecord:
    """One dated, coded structured-EHR fact."""

    patient_id: str
    date: Date
    code_system: CodeSystem
    code: str
    value: float | None = None
    unit: str | None = None

    def __post_init__(self):
        if not self.code:
            raise CorpusError(f"patient {self.patient_id}: code must be non-empty")
        if self.code_system is CodeSystem.LAB and self.value is None:
            raise CorpusError(
                f"patient {self.patient_id}: LAB record {self.code} must carry a value"
            )


# ---------------------------------------------------------------------------
# Feature schema and vectors
# ---------------------------------------------------------------------------

class ColumnKind(str, Enum):
    BINARY = "binary"
    NUMERIC = "numeric"
    CATEGORICAL = "categorical"


class WindowClass(str, Enum):
    HISTORY = "history"
    LAB = "lab"
    PROCEDURE = "procedure"
    DEMOGRAPHIC = "demographic"
    AF_FLAG = "af_flag"


#: The four AF flags every schema must carry.
AF_FLAG_COLUMNS = (
    "new_af_diagnosis",
    "prior_af_in_history",
    "af_type",
    "potential_recurrence",
)


@dataclass(frozen=True)
class Column:
    name: str
    kind: ColumnKind
    cardinality: int | None = None
    window_class: WindowClass = WindowClass.HISTORY

    def __post_init__(self):
        if self.kind is ColumnKind.CATEGORICAL:
            if not self.cardinality or self.cardinality < 2:
                raise SchemaError(f"column {self.name}: categorical needs cardinality >= 2")
        elif self.cardinality is not None:
            raise SchemaError(f"column {self.name}: only categorical columns take a cardinality")


@dataclass(frozen=True)
class FeatureSchema:
    """Ordered column list; the canonical bundled configuration has 86 columns."""

    columns: tuple[Column, ...]

    def __post_init__(self):
        names = [c.name for c in self.columns]
        seen = set()
        for n in names:
            if n in seen:
                raise SchemaError(f"duplicate column {n!r}")
            seen.add(n)
        for flag in AF_FLAG_COLUMNS:
            if flag not in seen:
                raise SchemaError(f"schema is missing required AF flag column {flag!r}")

    def __len__(self) -> int:
        return len(self.columns)

    def __contains__(self, name: str) -> bool:
        return name in self.by_name

    @property
    def by_name(self) -> dict[str, Column]:
        cached = getattr(self, "_by_name", None)
        if cached is None:
            cached = {c.name: c for c in self.columns}
            object.__setattr__(self, "_by_name", cached)
        return cached

    @property
    def names(self) -> list[str]:
        return [c.name for c in self.columns]

    def column(self, name: str) -> Column:
        try:
            return self.by_name[name]
        except KeyError:
            raise SchemaError(f"unknown column {name!r}") from None


def _check_cell(column: Column, value) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise SchemaError(f"column {column.name}: cell value {value!r} is not numeric")
    v = float(value)
    if not math.isfinite(v):
        raise SchemaError(f"column {column.name}: cell value must be finite")
    if column.kind is ColumnKind.BINARY and v not in (0.0, 1.0):
        raise SchemaError(f"column {column.name}: binary cell must be 0 or 1, got {value!r}")
    if column.kind is ColumnKind.CATEGORICAL:
        if v != int(v) or not (0 <= int(v) < column.cardinality):
            raise SchemaError(
                f"column {column.name}: categorical cell {value!r} outside 0..{column.cardinality - 1}"
            )
    return v


@dataclass(frozen=True)
class FeatureVector:
    """One row in the tabular representation; absent key == missing cell."""

    patient_id: str
    date: Date
    cells: dict[str, float]
    source_report_id: str | None = None

    def get(self, name: str) -> float | None:
        return self.cells.get(name)

    def to_json(self) -> dict:
        return {
            "patient_id": self.patient_id,
            "date": self.date.isoformat(),
            "source_report_id": self.source_report_id,
            "cells": dict(sorted(self.cells.items())),
        }

    @classmethod
    def from_json(cls, obj: dict) -> "FeatureVector":
        return cls(
            patient_id=obj["patient_id"],
            date=Date.fromisoformat(obj["date"]),
            cells={k: float(v) for k, v in obj["cells"].items()},
            source_report_id=obj.get("source_report_id"),
        )


def validate_vector(vector: FeatureVector, schema: FeatureSchema) -> FeatureVector:
    """Check every cell against the schema; raises SchemaError on violation."""
    for name, value in vector.cells.items():
        column = schema.by_name.get(name)
        if column is None:
            raise SchemaError(f"vector {vector.patient_id}@{vector.date}: unknown column {name!r}")
        _check_cell(column, value)
    return vector


class RecurrenceLabel(str, Enum):
    RECURRED = "Recurred"
    NO_RECURRENCE = "NoRecurrence"
    DISCARDED = "Discarded"


@dataclass(frozen=True)
class PatientTimeline:
    """All vectors of one patient in ascending date order."""

    patient_id: str
    vectors: tuple[FeatureVector, ...]
    onset_date: Date | None = None
    recurrence_label: RecurrenceLabel | None = None

    def __post_init__(self):
        for v in self.vectors:
            if v.patient_id != self.patient_id:
                raise SchemaError(
                    f"timeline {self.patient_id}: vector belongs to {v.patient_id}"
                )
        dates = [v.date for v in self.vectors]
        if dates != sorted(dates):
            raise SchemaError(f"timeline {self.patient_id}: vectors must be date-sorted")

    def with_onset(self, onset_date: Date) -> "PatientTimeline":
        return replace(self, onset_date=onset_date)

    def with_label(self, label: RecurrenceLabel) -> "PatientTimeline":
        return replace(self, recurrence_label=label)


def build_timeline(patient_id: str, vectors: list[FeatureVector]) -> PatientTimeline:
    """Sort vectors deterministically and wrap them in a PatientTimeline."""
    ordered = sorted(
        vectors,
        key=lambda v: (v.date, v.source_report_id is None, v.source_report_id or ""),
    )
    return PatientTimeline(patient_id=patient_id, vectors=tuple(ordered))


@dataclass(frozen=True)
class Dataset:
    """Patient-level rows plus binary labels and train/test split tags."""

    schema: FeatureSchema
    rows: tuple[FeatureVector, ...]
    labels: tuple[int, ...]
    split_tags: tuple[str, ...]

    def __post_init__(self):
        n = len(self.rows)
        if len(self.labels) != n or len(self.split_tags) != n:
            raise SchemaError("rows, labels and split_tags must align")
        seen = set()
        for row in self.rows:
            if row.patient_id in seen:
                raise SchemaError(f"dataset has more than one row for {row.patient_id}")
            seen.add(row.patient_id)
            validate_vector(row, self.schema)
        for lab in self.labels:
            if lab not in (0, 1):
                raise SchemaError(f"label must be 0 or 1, got {lab!r}")
        for tag in self.split_tags:
            if tag not in ("train", "test"):
                raise SchemaError(f"split tag must be train or test, got {tag!r}")

    def split(self, tag: str) -> list[int]:
        return [i for i, t in enumerate(self.split_tags) if t == tag]


# ---------------------------------------------------------------------------
# Date handling
# ---------------------------------------------------------------------------

def parse_date(raw: str, context: str) -> Date:
    try:
        return Date.fromisoformat(raw.strip())
    except ValueError:
        raise CorpusError(f"{context}: invalid date {raw!r}") from None


# ---------------------------------------------------------------------------
# CSV plumbing (comment-aware)
# ---------------------------------------------------------------------------

def _read_csv_rows(path: Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows:
        raise CorpusError(f"{path}: empty file")
    return rows[0], rows[1:]


def _provenance_lines(provenance: dict | None) -> list[str]:
    if not provenance:
        return []
    return [f"# {key}={provenance[key]}" for key in sorted(provenance)]


def _format_cell(column: Column, value: float) -> str:
    if column.kind in (ColumnKind.BINARY, ColumnKind.CATEGORICAL):
        return str(int(value))
    if value == int(value):
        return str(int(value))
    return repr(value)


# ---------------------------------------------------------------------------
# Corpus loading
# ---------------------------------------------------------------------------

CORPUS_FORMATS = ("report-JSONL", "text-directory-with-sidecar")


def load_corpus(path: str | Path, format: str = "report-JSONL",
                as_of: Date | None = None) -> list[DischargeReport]:
    """Load a report corpus; stable order (patient_id, date, report_id).

    ``as_of`` optionally rejects reports dated after the corpus snapshot.
    """
    path = Path(path)
    if format not in CORPUS_FORMATS:
        raise CorpusError(f"unknown corpus format {format!r}; expected one of {CORPUS_FORMATS}")
    if format == "report-JSONL":
        reports = _load_jsonl_corpus(path)
    else:
        reports = _load_directory_corpus(path)
    seen: set[str] = set()
    for r in reports:
        if r.report_id in seen:
            raise CorpusError(f"duplicate report_id {r.report_id!r}")
        seen.add(r.report_id)
        if as_of is not None and r.date > as_of:
            raise CorpusError(f"report {r.report_id}: date {r.date} is after corpus date {as_of}")
    return sorted(reports, key=lambda r: (r.patient_id, r.date, r.report_id))


def _load_jsonl_corpus(path: Path) -> list[DischargeReport]:
    reports = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON ({exc})") from None
            rid = obj.get("report_id", f"<line {lineno}>")
            for key in ("report_id", "patient_id", "date", "body"):
                if key not in obj:
                    raise CorpusError(f"report {rid}: missing field {key!r}")
            reports.append(
                DischargeReport(
                    report_id=obj["report_id"],
                    patient_id=obj["patient_id"],
                    date=parse_date(obj["date"], f"report {rid}, field 'date'"),
                    body=obj["body"],
                )
            )
    return reports


def _load_directory_corpus(path: Path) -> list[DischargeReport]:
    sidecars = sorted(path.glob("*.csv"))
    if not sidecars:
        raise CorpusError(f"{path}: no CSV sidecar found")
    header, rows = _read_csv_rows(sidecars[0])
    expected = ["report_id", "patient_id", "date", "filename"]
    if header != expected:
        raise CorpusError(f"{sidecars[0]}: sidecar header must be {','.join(expected)}")
    reports = []
    for row in rows:
        if len(row) != 4:
            raise CorpusError(f"{sidecars[0]}: malformed sidecar row {row!r}")
        rid, pid, rawdate, filename = row
        body_path = path / filename
        if not body_path.is_file():
            raise CorpusError(f"report {rid}: missing text file {filename!r}")
        reports.append(
            DischargeReport(
                report_id=rid,
                patient_id=pid,
                date=parse_date(rawdate, f"report {rid}, field 'date'"),
                body=body_path.read_text(encoding="utf-8"),
            )
        )
    return reports


def save_corpus(path: str | Path, reports: list[DischargeReport],
                provenance: dict | None = None) -> None:
    """Write reports as JSON lines (the canonical corpus format)."""
    with open(path, "w", encoding="utf-8") as fh:
        for line in _provenance_lines(provenance):
            fh.write(line + "\n")
        for r in reports:
            fh.write(json.dumps(
                {"report_id": r.report_id, "patient_id": r.patient_id,
                 "date": r.date.isoformat(), "body": r.body},
                ensure_ascii=False) + "\n")


# ---------------------------------------------------------------------------
# Schema loading
# ---------------------------------------------------------------------------

def load_schema(path: str | Path) -> FeatureSchema:
    """Load a schema CSV (``column,kind,cardinality,window_class``)."""
    header, rows = _read_csv_rows(Path(path))
    if header != ["column", "kind", "cardinality", "window_class"]:
        raise SchemaError(f"{path}: bad schema header {header!r}")
    columns = []
    for row in rows:
        if len(row) != 4:
            raise SchemaError(f"{path}: malformed schema row {row!r}")
        name, kind, cardinality, window_class = row
        try:
            kind_e = ColumnKind(kind)
        except ValueError:
            raise SchemaError(f"column {name!r}: unknown kind {kind!r}") from None
        try:
            window_e = WindowClass(window_class)
        except ValueError:
            raise SchemaError(f"column {name!r}: unknown window class {window_class!r}") from None
        card = int(cardinality) if cardinality else None
        columns.append(Column(name=name, kind=kind_e, cardinality=card, window_class=window_e))
    return FeatureSchema(columns=tuple(columns))


def canonical_schema() -> FeatureSchema:
    """The bundled 86-column schema."""
    with resources.as_file(resources.files("afrec.resources") / "schema.csv") as p:
        return load_schema(p)


# ---------------------------------------------------------------------------
# Coded-record CSV
# ---------------------------------------------------------------------------

_CODED_HEADER = ["patient_id", "date", "code_system", "code", "value", "unit"]


def load_coded_records(path: str | Path) -> list[CodedRecord]:
    header, rows = _read_csv_rows(Path(path))
    if header != _CODED_HEADER:
        raise CorpusError(f"{path}: bad coded-record header {header!r}")
    records = []
    for row in rows:
        if len(row) != 6:
            raise CorpusError(f"{path}: malformed coded row {row!r}")
        pid, rawdate, system, code, value, unit = row
        try:
            system_e = CodeSystem(system)
        except ValueError:
            raise CorpusError(f"patient {pid}: unknown code system {system!r}") from None
        records.append(
            CodedRecord(
                patient_id=pid,
                date=parse_date(rawdate, f"patient {pid}, coded record {code}"),
                code_system=system_e,
                code=code,
                value=float(value) if value else None,
                unit=unit or None,
            )
        )
    return records


def save_coded_records(path: str | Path, records: list[CodedRecord],
                       provenance: dict | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in _provenance_lines(provenance):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(_CODED_HEADER)
        for r in records:
            writer.writerow([
                r.patient_id, r.date.isoformat(), r.code_system.value, r.code,
                "" if r.value is None else (repr(r.value) if r.value != int(r.value) else str(int(r.value))),
                r.unit or "",
            ])


# ---------------------------------------------------------------------------
# Feature-matrix CSV
# ---------------------------------------------------------------------------

def save_matrix(path: str | Path, schema: FeatureSchema, vectors: list[FeatureVector],
                provenance: dict | None = None) -> None:
    """Write vectors as the interchange feature matrix."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        for line in _provenance_lines(provenance):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "date"] + schema.names)
        for v in vectors:
            validate_vector(v, schema)
            row = [v.patient_id, v.date.isoformat()]
            for col in schema.columns:
                val = v.cells.get(col.name)
                row.append("" if val is None else _format_cell(col, val))
            writer.writerow(row)


def load_matrix(path: str | Path, schema: FeatureSchema) -> list[FeatureVector]:
    header, rows = _read_csv_rows(Path(path))
    if header != ["patient_id", "date"] + schema.names:
        raise SchemaError(f"{path}: matrix header does not match the schema")
    vectors = []
    for row in rows:
        if len(row) != len(schema) + 2:
            raise SchemaError(f"{path}: row width {len(row)} != {len(schema) + 2}")
        pid, rawdate = row[0], row[1]
        cells = {}
        for col, raw in zip(schema.columns, row[2:]):
            if raw == "":
                continue
            cells[col.name] = float(raw)
        vectors.append(
            validate_vector(
                FeatureVector(patient_id=pid, date=parse_date(rawdate, f"row {pid}"), cells=cells),
                schema,
            )
        )
    return vectors


# ---------------------------------------------------------------------------
# Dataset (feature matrix + labels file)
# ---------------------------------------------------------------------------

_LABELS_HEADER = ["patient_id", "label", "split", "onset_report_id"]


def save_dataset(directory: str | Path, dataset: Dataset,
                 provenance: dict | None = None) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_matrix(directory / "features.csv", dataset.schema, list(dataset.rows), provenance)
    with open(directory / "labels.csv", "w", newline="", encoding="utf-8") as fh:
        for line in _provenance_lines(provenance):
            fh.write(line + "\n")
        writer = csv.writer(fh)
        writer.writerow(_LABELS_HEADER)
        for row, label, tag in zip(dataset.rows, dataset.labels, dataset.split_tags):
            writer.writerow([row.patient_id, label, tag, row.source_report_id or ""])


def load_dataset(directory: str | Path, schema: FeatureSchema | None = None) -> Dataset:
    directory = Path(directory)
    schema = schema or canonical_schema()
    vectors = load_matrix(directory / "features.csv", schema)
    header, rows = _read_csv_rows(directory / "labels.csv")
    if header != _LABELS_HEADER:
        raise CorpusError(f"{directory / 'labels.csv'}: bad labels header {header!r}")
    meta = {}
    for row in rows:
        pid, label, tag, onset_rid = row
        meta[pid] = (int(label), tag, onset_rid or None)
    labels, tags, out = [], [], []
    for v in vectors:
        if v.patient_id not in meta:
            raise CorpusError(f"labels.csv is missing patient {v.patient_id}")
        label, tag, onset_rid = meta[v.patient_id]
        out.append(replace(v, source_report_id=onset_rid))
        labels.append(label)
        tags.append(tag)
    return Dataset(schema=schema, rows=tuple(out), labels=tuple(labels), split_tags=tuple(tags))
