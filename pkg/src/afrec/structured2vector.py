"""Convert coded EHR rows into feature vectors in the shared schema.

One vector is emitted per distinct record date, because the codification
date drives the downstream temporal merge. Mapping is data-driven through a
code map (prefix or exact patterns); the most specific (longest) pattern
wins when prefixes overlap. No information is invented: every non-missing
cell traces back to at least one input record via the returned provenance.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from importlib import resources
from pathlib import Path

import numpy as np

from .data_model import (
    CodedRecord,
    CodeSystem,
    ColumnKind,
    CorpusError,
    FeatureSchema,
    FeatureVector,
    validate_vector,
)

log = logging.getLogger(__name__)

_VALUE_MODES = ("set_binary_1", "copy_value")


@dataclass(frozen=True)
class CodeMapEntry:
    code_system: CodeSystem
    code_pattern: str  # trailing '*' marks a prefix pattern
    feature_column: str
    value_mode: str

    @property
    def is_prefix(self) -> bool:
        return self.code_pattern.endswith("*")

    @property
    def stem(self) -> str:
        return self.code_pattern[:-1] if self.is_prefix else self.code_pattern

    def matches(self, record: CodedRecord) -> bool:
        if record.code_system is not self.code_system:
            return False
        if self.is_prefix:
            return record.code.startswith(self.stem)
        return record.code == self.code_pattern


@dataclass(frozen=True)
class CodeMap:
    entries: tuple[CodeMapEntry, ...]

    def __post_init__(self):
        seen = set()
        for e in self.entries:
            key = (e.code_system, e.code_pattern)
            if key in seen:
                raise CorpusError(f"ambiguous code map: duplicate pattern {e.code_pattern!r} "
                                  f"for {e.code_system.value}")
            seen.add(key)

    def lookup(self, record: CodedRecord) -> CodeMapEntry | None:
        """Most specific (longest stem) matching entry, or None."""
        best = None
        for e in self.entries:
            if e.matches(record):
                key = (len(e.stem), not e.is_prefix)
                if best is None or key > best[0]:
                    best = (key, e)
        return None if best is None else best[1]

    def columns_for(self, column: str) -> list[CodeMapEntry]:
        return [e for e in self.entries if e.feature_column == column]


def load_code_map(path: str | Path) -> CodeMap:
    """Load a code map CSV (``code_system,code_pattern,feature_column,value_mode``)."""
    entries = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(ln for ln in fh if not ln.startswith("#"))
        header = next(reader, None)
        if header != ["code_system", "code_pattern", "feature_column", "value_mode"]:
            raise CorpusError(f"{path}: bad code map header {header!r}")
        for row in reader:
            if len(row) != 4:
                raise CorpusError(f"{path}: malformed code map row {row!r}")
            system, pattern, column, mode = row
            if mode not in _VALUE_MODES:
                raise CorpusError(f"{path}: unknown value mode {mode!r}")
            entries.append(CodeMapEntry(
                code_system=CodeSystem(system), code_pattern=pattern,
                feature_column=column, value_mode=mode,
            ))
    return CodeMap(entries=tuple(entries))


def bundled_code_map() -> CodeMap:
    with resources.as_file(resources.files("afrec.resources") / "codemap.csv") as p:
        return load_code_map(p)


def validate_code_map(code_map: CodeMap, schema: FeatureSchema) -> None:
    for e in code_map.entries:
        if e.feature_column not in schema:
            raise CorpusError(f"code map entry {e.code_pattern!r} targets unknown "
                              f"column {e.feature_column!r}")


@dataclass
class CodedVectorization:
    """vectorize_coded output: vectors plus audit trail and warning counts."""

    vectors: list[FeatureVector]
    unmapped_codes: int = 0
    dropped_values: int = 0
    # (date, column) -> list of (code_system, code) that produced the cell
    provenance: dict = field(default_factory=dict)


def vectorize_coded(records: list[CodedRecord], code_map: CodeMap,
                    schema: FeatureSchema) -> CodedVectorization:
    """One vector per distinct record date for a single patient's records.

    Unmapped codes are skipped and counted. A negative value for a
    value-carrying column whose unit forbids negatives is dropped to missing
    and counted. Output is invariant under permutation of the input records.
    """
    patients = {r.patient_id for r in records}
    if len(patients) > 1:
        raise CorpusError(f"vectorize_coded expects one patient, got {sorted(patients)}")
    result = CodedVectorization(vectors=[])
    if not records:
        return result

    patient_id = records[0].patient_id
    ordered = sorted(records, key=lambda r: (r.date, r.code_system.value, r.code,
                                             r.value if r.value is not None else -np.inf))
    by_date: dict = {}
    for record in ordered:
        entry = code_map.lookup(record)
        if entry is None:
            result.unmapped_codes += 1
            log.warning("patient %s: unmapped code %s/%s", patient_id,
                        record.code_system.value, record.code)
            continue
        column = schema.column(entry.feature_column)
        if entry.value_mode == "set_binary_1":
            value = 1.0
        else:
            value = record.value
            if value is None:
                result.dropped_values += 1
                continue
            if value < 0 and not _unit_allows_negative(record.unit):
                result.dropped_values += 1
                log.warning("patient %s: negative value %s for %s dropped",
                            patient_id, value, entry.feature_column)
                continue
            if column.kind is not ColumnKind.NUMERIC:
                value = float(int(value))
        cells = by_date.setdefault(record.date, {})
        cells[entry.feature_column] = value  # last in sorted order wins
        result.provenance.setdefault((record.date, entry.feature_column), []).append(
            (record.code_system.value, record.code)
        )
    for d in sorted(by_date):
        result.vectors.append(
            validate_vector(
                FeatureVector(patient_id=patient_id, date=d, cells=by_date[d]),
                schema,
            )
        )
    return result


def _unit_allows_negative(unit: str | None) -> bool:
    # Every unit the bundled map uses is magnitude-only; extend here if a
    # signed quantity (e.g. base excess) ever joins the schema.
    return False


def degrade_records(records: list[CodedRecord], rate: float, seed: int,
                    mode: str = "drop") -> list[CodedRecord]:
    """Error-injection hook: randomly drop (or corrupt) a fraction of records.

    Emulates real-world coded-data error rates so tests can quantify how
    much the merged pipeline recovers from coded-data gaps.
    """
    if not 0.0 <= rate <= 1.0:
        raise ValueError(f"rate must be in [0, 1], got {rate}")
    if mode not in ("drop", "corrupt"):
        raise ValueError(f"unknown degradation mode {mode!r}")
    rng = np.random.default_rng(seed)
    out = []
    for record in records:
        hit = rng.random() < rate
        if not hit:
            out.append(record)
        elif mode == "corrupt":
            if record.value is not None:
                out.append(replace(record, value=record.value * float(rng.uniform(5.0, 10.0))))
            else:
                out.append(replace(record, code=record.code + "X"))
    return out
