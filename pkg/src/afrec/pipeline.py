"""End-to-end orchestration shared by the CLI: cohort building, dataset
assembly, model training and evaluation.

Every stage is deterministic given the seed; all per-patient iteration runs
in sorted order so artifacts are byte-stable.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass
from datetime import date as Date
from pathlib import Path

import numpy as np

from . import models
from .cohort_builder import (
    CohortRow,
    MANIFEST_HEADER,
    apply_exclusions,
    confirm_onset,
    filter_patients,
    label_recurrence,
    term_screen,
)
from .data_model import (
    CodedRecord,
    Dataset,
    DischargeReport,
    FeatureSchema,
    FeatureVector,
    RecurrenceLabel,
    build_timeline,
    canonical_schema,
)
from .entity_extractor import (
    RulePack,
    apply_negation,
    bundled_rulepack,
    classify_af_onset,
    extract_entities,
    validate_rulepack,
)
from .preprocessing import (
    FittedPreprocessing,
    impute_median,
    lsfm_select,
    matrix_of,
    observed_columns,
    rfe_select,
    row_missing_fractions,
    standardize,
    undersample,
)
from .report2vector import vectorize_report
from .section_parser import SectionLexicon, bundled_lexicon, parse_sections
from .structured2vector import CodeMap, bundled_code_map, validate_code_map, vectorize_coded
from .vector_merger import MergeWindows, bundled_windows, merge_patient

log = logging.getLogger(__name__)


@dataclass
class Resources:
    """The five interdependent rule files behind one root."""

    schema: FeatureSchema
    lexicon: SectionLexicon
    rulepack: RulePack
    code_map: CodeMap
    windows: MergeWindows

    @classmethod
    def bundled(cls) -> "Resources":
        resources = cls(
            schema=canonical_schema(),
            lexicon=bundled_lexicon(),
            rulepack=bundled_rulepack(),
            code_map=bundled_code_map(),
            windows=bundled_windows(),
        )
        resources.validate()
        return resources

    def validate(self) -> None:
        validate_rulepack(self.rulepack, self.schema)
        validate_code_map(self.code_map, self.schema)


@dataclass
class PatientOutcome:
    patient_id: str
    onset_date: Date | None
    onset_report_id: str | None
    confirmed: bool
    label: RecurrenceLabel | None = None
    excluded: bool = False
    exclusion_reason: str | None = None
    merged: FeatureVector | None = None


@dataclass
class CohortResult:
    outcomes: dict  # patient_id -> PatientOutcome

    def manifest_rows(self) -> list[CohortRow]:
        rows = []
        for pid in sorted(self.outcomes):
            o = self.outcomes[pid]
            if not o.confirmed:
                continue
            rows.append(CohortRow(
                patient_id=pid, onset_date=o.onset_date, label=o.label,
                excluded=o.excluded, exclusion_reason=o.exclusion_reason,
            ))
        return rows

    def dataset_patients(self) -> list[str]:
        """Confirmed, not excluded, with a definite label."""
        return [
            pid for pid in sorted(self.outcomes)
            if (o := self.outcomes[pid]).confirmed and not o.excluded
            and o.label in (RecurrenceLabel.RECURRED, RecurrenceLabel.NO_RECURRENCE)
        ]


def annotate_report(report: DischargeReport, res: Resources):
    """Section, extract and classify one report (the `parse` stage)."""
    sectioned = parse_sections(report, res.lexicon)
    mentions = apply_negation(extract_entities(sectioned, res.rulepack),
                              sectioned, res.rulepack)
    onset_info = classify_af_onset(sectioned, res.rulepack, mentions)
    return sectioned, mentions, onset_info


def report_vectors_for(reports: list[DischargeReport], res: Resources) -> list[FeatureVector]:
    out = []
    for report in reports:
        sectioned, mentions, onset_info = annotate_report(report, res)
        out.append(vectorize_report(sectioned, mentions, onset_info, res.schema))
    return out


def build_cohort(reports: list[DischargeReport], coded: list[CodedRecord],
                 res: Resources, death_dates: dict | None = None) -> CohortResult:
    """Run the full inclusion / merge / exclusion / labeling flow.

    The keyword screen gates only onset confirmation (mirroring its
    report-reduction role); recurrence labeling sees every report of the
    patient so sinus-rhythm-only follow-ups still count as evidence.
    """
    death_dates = death_dates or {}
    candidates = filter_patients(coded, res.code_map)
    log.info("patient filter kept %d patients", len(candidates))

    reports_by_patient: dict[str, list[DischargeReport]] = {}
    for report in reports:
        reports_by_patient.setdefault(report.patient_id, []).append(report)
    screened = term_screen(reports, res.rulepack)
    screened_by_patient: dict[str, list[DischargeReport]] = {}
    for report in screened:
        screened_by_patient.setdefault(report.patient_id, []).append(report)

    coded_by_patient: dict[str, list[CodedRecord]] = {}
    for record in coded:
        coded_by_patient.setdefault(record.patient_id, []).append(record)

    outcomes: dict[str, PatientOutcome] = {}
    for pid in sorted(candidates):
        confirmation = confirm_onset(pid, screened_by_patient.get(pid, []),
                                     res.rulepack, res.lexicon)
        if not confirmation.confirmed:
            outcomes[pid] = PatientOutcome(patient_id=pid, onset_date=None,
                                           onset_report_id=None, confirmed=False)
            continue
        vectors = report_vectors_for(reports_by_patient.get(pid, []), res)
        coded_result = vectorize_coded(coded_by_patient.get(pid, []),
                                       res.code_map, res.schema)
        timeline = build_timeline(pid, vectors + coded_result.vectors)
        merged = merge_patient(timeline, res.windows, res.schema).vector
        outcomes[pid] = PatientOutcome(
            patient_id=pid,
            onset_date=confirmation.onset_date,
            onset_report_id=confirmation.onset_report_id,
            confirmed=True,
            merged=merged,
        )

    confirmed = [pid for pid, o in outcomes.items() if o.confirmed]
    ages = {pid: outcomes[pid].merged.cells.get("age") for pid in confirmed}
    onset_dates = {pid: outcomes[pid].onset_date for pid in confirmed}
    decisions = apply_exclusions(confirmed, onset_dates, ages, death_dates)
    for pid in confirmed:
        outcomes[pid].excluded = decisions[pid].excluded
        outcomes[pid].exclusion_reason = decisions[pid].reason
        outcomes[pid].label = label_recurrence(
            outcomes[pid].onset_date, reports_by_patient.get(pid, []),
            res.rulepack, res.lexicon,
        )
    return CohortResult(outcomes=outcomes)


def write_manifest(path: str | Path, cohort: CohortResult,
                   provenance: dict | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            for key in sorted(provenance):
                fh.write(f"# {key}={provenance[key]}\n")
        writer = csv.writer(fh)
        writer.writerow(MANIFEST_HEADER)
        for row in cohort.manifest_rows():
            writer.writerow(row.as_csv_row())


def build_dataset(cohort: CohortResult, schema: FeatureSchema, seed: int,
                  test_fraction: float = 0.2) -> Dataset:
    """Patient-level dataset from the labeled cohort with a seeded,
    label-stratified train/test split."""
    patients = cohort.dataset_patients()
    rows = []
    labels = []
    for pid in patients:
        outcome = cohort.outcomes[pid]
        rows.append(outcome.merged)
        labels.append(1 if outcome.label is RecurrenceLabel.RECURRED else 0)
    tags = ["train"] * len(rows)
    rng = np.random.default_rng(seed)
    for cls in (0, 1):
        idx = [i for i, lab in enumerate(labels) if lab == cls]
        n_test = int(round(len(idx) * test_fraction))
        chosen = rng.permutation(len(idx))[:n_test]
        for j in chosen:
            tags[idx[j]] = "test"
    return Dataset(schema=schema, rows=tuple(rows), labels=tuple(labels),
                   split_tags=tuple(tags))


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainedSystem:
    name: str
    preprocessing: FittedPreprocessing
    cv: models.CVResult
    model: models.LinearModel


def train_system(dataset: Dataset, kind: str, fs_method: str | None = "rfe",
                 fs_target: int | None = None, fs_step: int = 1,
                 use_undersample: bool = False, grid: list[dict] | None = None,
                 cv_folds: int = 5, seed: int = 0,
                 fit_params: dict | None = None) -> TrainedSystem:
    """Fit the full preprocessing + model pipeline on the train split.

    Columns never observed on the train split carry no information for this
    run; they are left out of imputation and modeling rather than erroring.
    """
    missingness = row_missing_fractions(dataset)
    usable = observed_columns(dataset)
    ds_imputed, imputation = impute_median(dataset, usable)
    ds_scaled, scaling = standardize(ds_imputed)

    train_idx = ds_scaled.split("train")
    train_rows = Dataset(
        schema=ds_scaled.schema,
        rows=tuple(ds_scaled.rows[i] for i in train_idx),
        labels=tuple(ds_scaled.labels[i] for i in train_idx),
        split_tags=tuple("train" for _ in train_idx),
    )
    if use_undersample:
        train_rows = undersample(train_rows, missingness[train_idx])

    names = usable
    X_train = matrix_of(train_rows, names)
    y_train = np.array(train_rows.labels, dtype=float)

    if fs_method is None:
        selected = list(names)
    elif fs_method == "rfe":
        target = fs_target if fs_target is not None else math.ceil(0.25 * len(names))
        selected = rfe_select(X_train, y_train, names, target, step=fs_step,
                              params=fit_params, seed=seed)
    elif fs_method == "lsfm":
        selected = lsfm_select(X_train, y_train, names, seed=seed)
    else:
        raise ValueError(f"unknown feature-selection method {fs_method!r}")

    keep_idx = [names.index(c) for c in selected]
    cv = models.cross_validate(X_train[:, keep_idx], y_train, kind=kind, grid=grid,
                               k=cv_folds, seed=seed, base_params=fit_params,
                               columns=selected)
    fitted = FittedPreprocessing(imputation=imputation, scaling=scaling,
                                 selected_columns=selected, fs_method=fs_method)
    return TrainedSystem(name=kind, preprocessing=fitted, cv=cv, model=cv.model)


def apply_system(system: TrainedSystem, dataset: Dataset,
                 rows: list[int] | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Probabilities and 0/1 predictions for the given dataset rows."""
    transformed = system.preprocessing.apply(dataset)
    X = matrix_of(transformed, system.preprocessing.selected_columns)
    if rows is not None:
        X = X[rows]
    probs = models.predict_proba(system.model, X)
    return probs, (probs >= 0.5).astype(int)


# ---------------------------------------------------------------------------
# Predictions interchange (shared with the external-predictor protocol)
# ---------------------------------------------------------------------------

PREDICTIONS_HEADER = ["patient_id", "probability", "prediction"]


def save_predictions(path: str | Path, patient_ids: list[str], probabilities,
                     predictions, provenance: dict | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            for key in sorted(provenance):
                fh.write(f"# {key}={provenance[key]}\n")
        writer = csv.writer(fh)
        writer.writerow(PREDICTIONS_HEADER)
        for pid, prob, pred in zip(patient_ids, probabilities, predictions):
            writer.writerow([pid, repr(float(prob)), int(pred)])


def load_predictions(path: str | Path) -> dict:
    """patient_id -> (probability, prediction)."""
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows or rows[0] != PREDICTIONS_HEADER:
        raise ValueError(f"{path}: bad predictions header")
    out = {}
    for pid, prob, pred in rows[1:]:
        out[pid] = (float(prob), int(pred))
    return out
