"""Patient inclusion, exclusion and silver recurrence labeling.

Inclusion is double-checked: a patient needs both a coded AF onset and a
discharge report that independently classifies as an AF onset. Recurrence
is then labeled from the reports dated inside the follow-up window
(onset+30d, onset+730d] — the first post-onset month is the clinical
blanking period and is excluded, the lower bound being exclusive and the
upper inclusive.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from datetime import date as Date, timedelta

from .data_model import (
    CodedRecord,
    DischargeReport,
    RecurrenceLabel,
)
from .entity_extractor import (
    RulePack,
    apply_negation,
    classify_af_onset,
    extract_entities,
    has_sinus_rhythm_evidence,
)
from .section_parser import SectionLexicon, parse_sections
from .structured2vector import CodeMap
from .textnorm import fold

log = logging.getLogger(__name__)

#: Follow-up window bounds in days: (onset+30d, onset+730d], lower exclusive.
RECURRENCE_WINDOW_DAYS = (30, 730)

#: Exclusion thresholds: death within three months of onset, age over 90.
EARLY_DEATH_DAYS = 92
MAX_AGE = 90


def filter_patients(records: list[CodedRecord], code_map: CodeMap) -> dict[str, Date]:
    """Patients with a codified AF onset; maps patient_id to the earliest
    AF-coded date (the onset candidate)."""
    af_dates: dict[str, Date] = {}
    for record in records:
        entry = code_map.lookup(record)
        if entry is not None and entry.feature_column == "new_af_diagnosis":
            current = af_dates.get(record.patient_id)
            if current is None or record.date < current:
                af_dates[record.patient_id] = record.date
    return af_dates


def term_screen(reports: list[DischargeReport], rules: RulePack) -> list[DischargeReport]:
    """High-recall keyword pre-filter: keep any report whose body contains an
    AF surface form, negated or not. Precision is handled downstream."""
    af_patterns = [r.regex for r in rules.entity_rules
                   if r.target_kind == "flag" and r.target == "af_term"]
    kept = []
    for report in reports:
        folded = fold(report.body)
        if any(p.search(folded) for p in af_patterns):
            kept.append(report)
    return kept


@dataclass(frozen=True)
class OnsetConfirmation:
    confirmed: bool
    onset_report_id: str | None = None
    onset_date: Date | None = None


def confirm_onset(patient_id: str, reports: list[DischargeReport], rules: RulePack,
                  lexicon: SectionLexicon) -> OnsetConfirmation:
    """Confirm a coded onset against the patient's screened reports.

    Confirmed iff some report classifies as an onset (AF in Diagnosis or
    ComplementaryTests, nothing in PastMedicalHistory); the onset is the
    earliest confirming report.
    """
    candidates = sorted(
        (r for r in reports if r.patient_id == patient_id),
        key=lambda r: (r.date, r.report_id),
    )
    for report in candidates:
        sectioned = parse_sections(report, lexicon)
        if classify_af_onset(sectioned, rules).is_onset:
            return OnsetConfirmation(confirmed=True, onset_report_id=report.report_id,
                                     onset_date=report.date)
    return OnsetConfirmation(confirmed=False)


def in_recurrence_window(onset_date: Date, report_date: Date) -> bool:
    delta = (report_date - onset_date).days
    return RECURRENCE_WINDOW_DAYS[0] < delta <= RECURRENCE_WINDOW_DAYS[1]


def label_recurrence(onset_date: Date, reports: list[DischargeReport], rules: RulePack,
                     lexicon: SectionLexicon) -> RecurrenceLabel:
    """Silver label from the reports in the follow-up window.

    Recurred if any in-window report shows a non-negated AF term in
    Diagnosis or ComplementaryTests; else NoRecurrence if any in-window
    report evidences a return to sinus rhythm or an AF-free ECG; else
    Discarded (no verdict either way).
    """
    sinus_seen = False
    for report in sorted(reports, key=lambda r: (r.date, r.report_id)):
        if not in_recurrence_window(onset_date, report.date):
            continue
        sectioned = parse_sections(report, lexicon)
        mentions = apply_negation(extract_entities(sectioned, rules), sectioned, rules)
        if classify_af_onset(sectioned, rules, mentions).is_af_report:
            return RecurrenceLabel.RECURRED
        if has_sinus_rhythm_evidence(sectioned, rules, mentions):
            sinus_seen = True
    return RecurrenceLabel.NO_RECURRENCE if sinus_seen else RecurrenceLabel.DISCARDED


@dataclass(frozen=True)
class ExclusionDecision:
    excluded: bool
    reason: str | None = None


def apply_exclusions(patients: list[str], onset_dates: dict[str, Date],
                     ages: dict[str, float], death_dates: dict[str, Date]) -> dict[str, ExclusionDecision]:
    """Remove patients dead within three months of onset or aged over 90.

    Age exactly 90 is retained (the rule is strictly "over 90"). A patient
    with no known age is retained with a warning.
    """
    decisions = {}
    for pid in patients:
        onset = onset_dates[pid]
        age = ages.get(pid)
        if age is None:
            log.warning("patient %s: age unknown, retained for exclusion check", pid)
        if age is not None and age > MAX_AGE:
            decisions[pid] = ExclusionDecision(True, "age_over_90")
            continue
        death = death_dates.get(pid)
        if death is not None and death <= onset + timedelta(days=EARLY_DEATH_DAYS):
            decisions[pid] = ExclusionDecision(True, "early_death")
            continue
        decisions[pid] = ExclusionDecision(False)
    return decisions


@dataclass(frozen=True)
class CohortRow:
    """One row of the cohort manifest CSV."""

    patient_id: str
    onset_date: Date | None
    label: RecurrenceLabel | None
    excluded: bool
    exclusion_reason: str | None

    def as_csv_row(self) -> list[str]:
        return [
            self.patient_id,
            self.onset_date.isoformat() if self.onset_date else "",
            self.label.value if self.label else "",
            "1" if self.excluded else "0",
            self.exclusion_reason or "",
        ]


MANIFEST_HEADER = ["patient_id", "onset_date", "label", "excluded", "exclusion_reason"]
