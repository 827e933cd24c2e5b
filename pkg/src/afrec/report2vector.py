"""Turn one sectioned, entity-annotated report into one feature vector.

Cell semantics: a non-negated mention writes its value (1 for plain binary
rules), a negated mention writes 0, an unmentioned column stays missing.
Missing is never conflated with 0 — absence of evidence is not negated
evidence. Conflicts inside one report resolve deterministically: affirmed
beats negated, and among same-kind writes the last occurrence in the text
wins.
"""

from __future__ import annotations

from .data_model import (
    ColumnKind,
    FeatureSchema,
    FeatureVector,
    SectionedReport,
    validate_vector,
)
from .entity_extractor import EntityMention, OnsetInfo


def vectorize_report(sectioned: SectionedReport, mentions: list[EntityMention],
                     onset_info: OnsetInfo, schema: FeatureSchema) -> FeatureVector:
    """Build the report-specific vector, including the four AF flags."""
    cells: dict[str, float] = {}

    by_column: dict[str, list[EntityMention]] = {}
    for m in sorted(mentions, key=lambda m: (m.start, m.end)):
        if m.target_kind == "column":
            by_column.setdefault(m.target, []).append(m)

    for name, column_mentions in by_column.items():
        column = schema.column(name)
        captures = [m for m in column_mentions if m.value is not None and not m.negated]
        affirmed = [m for m in column_mentions if m.value is None and not m.negated]
        negated = [m for m in column_mentions if m.negated]
        if column.kind is ColumnKind.NUMERIC:
            if captures:
                cells[name] = captures[-1].value
        else:
            # Binary and categorical: explicit captured values take precedence,
            # then affirmed mentions, then negated ones.
            if captures:
                cells[name] = captures[-1].value
            elif affirmed:
                cells[name] = float(affirmed[-1].set_value)
            elif negated:
                cells[name] = 0.0

    cells["new_af_diagnosis"] = float(onset_info.is_af_report)
    cells["prior_af_in_history"] = float(onset_info.prior_af_in_history)
    cells["af_type"] = float(onset_info.af_type.value)
    cells["potential_recurrence"] = float(
        onset_info.is_af_report and onset_info.prior_af_in_history
    )

    return validate_vector(
        FeatureVector(
            patient_id=sectioned.report.patient_id,
            date=sectioned.report.date,
            cells=cells,
            source_report_id=sectioned.report.report_id,
        ),
        schema,
    )
