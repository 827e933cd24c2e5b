"""Merge all of a patient's report- and coded-derived vectors into a single
onset-anchored row using per-class temporal windows.

Windows are expressed in days relative to the onset date. Defaults: labs and
procedures from six months before to three months after onset ([-183, +92]),
medical history from any prior vector ((-inf, 0]), demographics from the
nearest-dated vector, AF flags from the onset report only. A missing cell is
filled from the in-window candidate nearest in time to onset; ties break
toward the earlier date, then toward the report (free-text) source. Binary
history columns additionally OR over all in-window affirmations, so a
documented condition is never lost to a later generic denial.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date as Date
from importlib import resources
from pathlib import Path

from .data_model import (
    ColumnKind,
    CorpusError,
    FeatureSchema,
    FeatureVector,
    PatientTimeline,
    WindowClass,
    validate_vector,
)


class NoOnsetError(ValueError):
    """The timeline has no vector qualifying as an AF onset."""


@dataclass(frozen=True)
class Window:
    lower_days: float | None  # None = unbounded
    upper_days: float | None

    def __post_init__(self):
        if self.lower_days is not None and self.upper_days is not None:
            if self.lower_days > self.upper_days:
                raise CorpusError(f"window lower {self.lower_days} > upper {self.upper_days}")

    def contains(self, delta_days: int) -> bool:
        if self.lower_days is not None and delta_days < self.lower_days:
            return False
        if self.upper_days is not None and delta_days > self.upper_days:
            return False
        return True


# Month arithmetic fixed at 1 month = 30.44 days, rounded: 6 months -> 183,
# 3 months -> 92 (kept consistent with the cohort exclusion window).
DEFAULT_WINDOWS: dict[WindowClass, Window] = {
    WindowClass.LAB: Window(-183, 92),
    WindowClass.PROCEDURE: Window(-183, 92),
    WindowClass.HISTORY: Window(None, 0),
    WindowClass.DEMOGRAPHIC: Window(None, None),
    WindowClass.AF_FLAG: Window(0, 0),
}


@dataclass(frozen=True)
class MergeWindows:
    windows: dict

    def __post_init__(self):
        for cls, window in self.windows.items():
            if cls is WindowClass.HISTORY and window.upper_days is not None and window.upper_days > 0:
                raise CorpusError("history window upper bound must be <= 0")

    def for_class(self, window_class: WindowClass) -> Window:
        return self.windows.get(window_class, DEFAULT_WINDOWS[window_class])


def default_windows() -> MergeWindows:
    return MergeWindows(windows=dict(DEFAULT_WINDOWS))


def load_windows(path: str | Path) -> MergeWindows:
    """Load a windows CSV (``window_class,lower_days,upper_days``; empty = unbounded)."""
    windows = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(ln for ln in fh if not ln.startswith("#"))
        header = next(reader, None)
        if header != ["window_class", "lower_days", "upper_days"]:
            raise CorpusError(f"{path}: bad windows header {header!r}")
        for row in reader:
            if len(row) != 3:
                raise CorpusError(f"{path}: malformed windows row {row!r}")
            cls, lower, upper = row
            windows[WindowClass(cls)] = Window(
                lower_days=float(lower) if lower else None,
                upper_days=float(upper) if upper else None,
            )
    return MergeWindows(windows=windows)


def bundled_windows() -> MergeWindows:
    with resources.as_file(resources.files("afrec.resources") / "windows.csv") as p:
        return load_windows(p)


def find_onset_vector(timeline: PatientTimeline) -> FeatureVector:
    """Earliest vector flagged new_af_diagnosis=1 with prior_af_in_history=0."""
    for vector in timeline.vectors:  # vectors are date-sorted
        if vector.cells.get("new_af_diagnosis") == 1.0 and \
                vector.cells.get("prior_af_in_history") == 0.0:
            return vector
    raise NoOnsetError(f"patient {timeline.patient_id}: no qualifying AF-onset vector")


@dataclass(frozen=True)
class CellProvenance:
    source_date: Date
    source_report_id: str | None
    delta_days: int


@dataclass(frozen=True)
class MergeResult:
    vector: FeatureVector
    provenance: dict  # column -> CellProvenance


def _candidate_key(vector: FeatureVector, onset_date: Date):
    delta = (vector.date - onset_date).days
    # Nearest first; ties to the earlier date; exact (same-date) ties to the
    # report source; report id last for full determinism.
    return (abs(delta), vector.date, vector.source_report_id is None,
            vector.source_report_id or "")


def _merge_cells(timeline: PatientTimeline, onset_date: Date, base: FeatureVector | None,
                 windows: MergeWindows, schema: FeatureSchema) -> MergeResult:
    cells: dict[str, float] = {}
    provenance: dict[str, CellProvenance] = {}
    if base is not None:
        for name, value in base.cells.items():
            cells[name] = value
            provenance[name] = CellProvenance(base.date, base.source_report_id, 0)

    ordered = sorted(timeline.vectors, key=lambda v: _candidate_key(v, onset_date))

    for column in schema.columns:
        if column.window_class is WindowClass.AF_FLAG:
            continue  # AF flags come from the onset report only
        window = windows.for_class(column.window_class)
        if column.name not in cells:
            for vector in ordered:
                if column.name not in vector.cells:
                    continue
                delta = (vector.date - onset_date).days
                if not window.contains(delta):
                    continue
                cells[column.name] = vector.cells[column.name]
                provenance[column.name] = CellProvenance(
                    vector.date, vector.source_report_id, delta)
                break
        if column.kind is ColumnKind.BINARY and column.window_class is WindowClass.HISTORY:
            if cells.get(column.name) == 1.0:
                continue
            for vector in ordered:
                value = vector.cells.get(column.name)
                delta = (vector.date - onset_date).days
                if value == 1.0 and window.contains(delta):
                    cells[column.name] = 1.0
                    provenance[column.name] = CellProvenance(
                        vector.date, vector.source_report_id, delta)
                    break

    merged = validate_vector(
        FeatureVector(
            patient_id=timeline.patient_id,
            date=onset_date,
            cells=cells,
            source_report_id=base.source_report_id if base is not None else None,
        ),
        schema,
    )
    return MergeResult(vector=merged, provenance=provenance)


def merge_patient(timeline: PatientTimeline, windows: MergeWindows,
                  schema: FeatureSchema) -> MergeResult:
    """Merge a timeline around its onset vector.

    Starts from the onset vector and fills each missing cell from the
    in-window candidate nearest to onset. Never erases an onset cell;
    idempotent on already-merged timelines.
    """
    onset = find_onset_vector(timeline)
    return _merge_cells(timeline, onset.date, onset, windows, schema)


def merge_at(timeline: PatientTimeline, onset_date: Date, windows: MergeWindows,
             schema: FeatureSchema) -> MergeResult:
    """Merge a timeline around an externally supplied onset date.

    Used when no single vector carries the onset flags, e.g. when building
    a structured-data-only baseline anchored on a known onset.
    """
    return _merge_cells(timeline, onset_date, None, windows, schema)
