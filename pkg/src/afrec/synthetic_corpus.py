"""Synthetic patient generator: discharge-report text, coded EHR rows,
death dates and a ground-truth manifest, so every pipeline stage has an
exact oracle (the real corpus is private).

Each patient gets an onset report whose Diagnosis carries an AF term and
whose history is AF-free, follow-up reports realizing the sampled
recurrence label inside the follow-up window, and coded rows mirroring the
planted facts. Report text is template-based over the bundled rule pack's
surface forms plus distractor sentences, so extraction is non-trivially
exercised. Lab and echo values are drawn from published summary statistics
(mean/SD truncated to the observed ranges). Same seed, byte-identical
output.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from datetime import date as Date, timedelta
from pathlib import Path

import numpy as np

from .data_model import (
    CodedRecord,
    CodeSystem,
    CorpusError,
    DischargeReport,
    FeatureSchema,
    RecurrenceLabel,
    canonical_schema,
    parse_date,
    save_coded_records,
    save_corpus,
)


@dataclass(frozen=True)
class GeneratorConfig:
    n_patients: int
    seed: int  # mandatory: generation is meaningless without one
    recurrence_prevalence: float = 0.63
    discard_fraction: float = 0.08
    female_fraction: float = 0.5116
    age_mean_female: float = 80.0
    age_mean_male: float = 72.0
    age_sd: float = 10.0
    corruption_rate: float = 0.0  # fraction of coded rows dropped at generation
    language: str = "es"
    early_death_fraction: float = 0.04
    pre_onset_report_prob: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.recurrence_prevalence < 1.0:
            raise CorpusError("recurrence_prevalence must be in (0, 1)")
        if self.language not in ("es", "en"):
            raise CorpusError(f"unsupported language {self.language!r}")
        if self.n_patients < 1:
            raise CorpusError("n_patients must be >= 1")


# ---------------------------------------------------------------------------
# Sampling tables (numeric columns: mean, sd, low, high, decimals)
# ---------------------------------------------------------------------------

NUMERIC_STATS = {
    "weight": (75.02, 16.09, 40.3, 153.2, 1),
    "height": (1.61, 0.10, 1.35, 1.90, 2),
    "bmi": (29.26, 5.26, 16.4, 58.04, 1),
    "urea": (54.10, 32.07, 9.0, 298.0, 2),
    "creatinine": (1.15, 0.80, 0.15, 9.65, 2),
    "albumin": (3.93, 0.50, 1.52, 7.80, 2),
    "glucose": (134.34, 56.56, 48.0, 824.0, 2),
    "hba1c": (6.27, 1.10, 4.3, 13.7, 2),
    "potassium": (4.29, 0.56, 2.34, 7.70, 2),
    "calcium": (9.35, 0.84, 2.36, 19.90, 2),
    "hdl_cholesterol": (49.85, 18.00, 12.0, 145.0, 2),
    "ldl_cholesterol": (117.92, 40.63, 25.0, 315.0, 2),
    "non_hdl_cholesterol": (93.34, 36.74, 12.0, 344.0, 2),
    "cholesterol": (170.60, 44.66, 72.0, 380.0, 2),
    "ntprobnp": (3489.18, 4869.44, 59.34, 35144.0, 2),
    "troponin_tnt": (57.31, 174.72, 5.0, 2823.0, 2),
    "fibrinogen": (440.89, 156.38, 120.0, 1200.0, 2),
    "leukocytes": (10.44, 23.92, 1.4, 500.0, 2),
    "pcr": (4.08, 4.70, 0.1, 20.0, 2),
    "tsh": (2.13, 1.63, 0.0, 13.52, 2),
    "sodium": (140.08, 3.97, 104.0, 165.0, 2),
    "lvef": (54.89, 12.27, 5.0, 84.0, 0),
    "la_diameter": (42.04, 11.73, 14.0, 90.0, 0),
    "la_area": (29.02, 5.37, 18.5, 45.0, 1),
}

HISTORY_PREVALENCE = {
    "depression": 0.1037, "alcohol": 0.1468, "drug_dependence": 0.0021,
    "anxiety": 0.0896, "dementia": 0.1059, "renal_insufficiency": 0.1941,
    "menopause": 0.0064, "osteoporosis": 0.0953, "smoking": 0.3232,
    "sahos": 0.0713, "hyperthyroidism": 0.0430, "copd": 0.1376,
    "diabetes_type1": 0.1503, "diabetes_type2": 0.2392, "dyslipidemia": 0.2689,
    "hypercholesterolemia": 0.3726, "flutter": 0.1976, "heart_failure": 0.5194,
    "metabolic_syndrome": 0.0021, "hypertension": 0.7805,
    "ischemic_cardiomyopathy": 0.1870, "stroke": 0.1334, "myocardiopathy": 0.0762,
    "branch_block": 0.1821, "atrioventricular_block": 0.0572, "bradycardia": 0.0635,
    "premature_contractions": 0.1418, "sinus_node_dysfunction": 0.0099,
    "rheumatic_valve_disease": 0.0028, "peripheral_arteriopathy": 0.0480,
}

VALVE_DISTRIBUTIONS = {
    "mitral_insufficiency": (0.8123, 0.1440, 0.0275, 0.0120, 0.0042),
    "mitral_stenosis": (0.9781, 0.0198, 0.0007, 0.0007, 0.0007),
    "aortic_stenosis": (0.8977, 0.0910, 0.0035, 0.0028, 0.0050),
    "aortic_insufficiency": (0.8469, 0.1468, 0.0042, 0.0021),
    "tricuspid_insufficiency": (0.7812, 0.2152, 0.0028, 0.0008),
}

DRUG_PREVALENCE = {
    "b01a": 0.9767, "n02ba01": 0.0191, "a02bc": 0.8934, "c03": 0.8095,
    "g03a": 0.0007, "a10": 0.4411, "n06a": 0.5667, "n05a": 0.2414,
    "n05b": 0.5787, "c01": 0.5603, "c02": 0.1171, "c04": 0.0628,
    "c07": 0.6288, "c08": 0.3726, "c09": 0.6761, "c10": 0.5688,
}

#: Type distribution: unspecified, paroxysmal, persistent, permanent.
AF_TYPE_DISTRIBUTION = (0.7996, 0.1757, 0.0099, 0.0148)

DEMOG_PREVALENCE = {"pensioner": 0.8532, "resident": 0.1263}

ECHO_RATE = 0.1164

ICD_BY_COLUMN = {
    "depression": "F32.9", "alcohol": "F10.20", "drug_dependence": "F19.20",
    "anxiety": "F41.9", "dementia": "F03.90", "renal_insufficiency": "N18.3",
    "menopause": "N95.1", "osteoporosis": "M81.0", "smoking": "F17.210",
    "sahos": "G47.3", "hyperthyroidism": "E05.90", "copd": "J44.9",
    "diabetes_type1": "E10.9", "diabetes_type2": "E11.9", "dyslipidemia": "E78.5",
    "hypercholesterolemia": "E78.0", "flutter": "I48.3", "heart_failure": "I50.9",
    "metabolic_syndrome": "E88.81", "hypertension": "I10",
    "ischemic_cardiomyopathy": "I25.5", "stroke": "I63.9", "myocardiopathy": "I42.9",
    "branch_block": "I45.1", "atrioventricular_block": "I44.2", "bradycardia": "R00.1",
    "premature_contractions": "I49.1", "sinus_node_dysfunction": "I49.5",
    "rheumatic_valve_disease": "I05.9", "peripheral_arteriopathy": "I73.9",
}

ATC_BY_COLUMN = {
    "b01a": "B01AF02", "n02ba01": "N02BA01", "a02bc": "A02BC01", "c03": "C03CA01",
    "g03a": "G03AA07", "a10": "A10BA02", "n06a": "N06AB06", "n05a": "N05AH04",
    "n05b": "N05BA06", "c01": "C01AA05", "c02": "C02CA04", "c04": "C04AD03",
    "c07": "C07AB07", "c08": "C08CA01", "c09": "C09AA02", "c10": "C10AA05",
}

LAB_CODE_BY_COLUMN = {
    "urea": ("UREA", "mg/dL"), "creatinine": ("CREA", "mg/dL"), "albumin": ("ALB", "g/dL"),
    "glucose": ("GLU", "mg/dL"), "hba1c": ("HBA1C", "%"), "potassium": ("K", "mmol/L"),
    "calcium": ("CA", "mg/dL"), "hdl_cholesterol": ("HDL", "mg/dL"),
    "ldl_cholesterol": ("LDL", "mg/dL"), "non_hdl_cholesterol": ("NOHDL", "mg/dL"),
    "cholesterol": ("COL", "mg/dL"), "ntprobnp": ("NTPROBNP", "pg/mL"),
    "troponin_tnt": ("TNT", "ng/L"), "fibrinogen": ("FIB", "mg/dL"),
    "leukocytes": ("LEU", "10^3/uL"), "pcr": ("PCR", "mg/dL"), "tsh": ("TSH", "mUI/L"),
    "sodium": ("NA", "mmol/L"),
}

AF_ICD_BY_TYPE = {0: "I48.91", 1: "I48.0", 2: "I48.1", 3: "I48.2"}

# Condition surface forms; the extraction rules must recover each of these.
CONDITION_PHRASES = {
    "es": {
        "depression": "Depresión", "alcohol": "Hábito enólico",
        "drug_dependence": "Drogodependencia", "anxiety": "Ansiedad",
        "dementia": "Demencia", "renal_insufficiency": "Insuficiencia renal crónica",
        "menopause": "Menopausia", "osteoporosis": "Osteoporosis",
        "smoking": "Fumador activo", "sahos": "SAHOS",
        "hyperthyroidism": "Hipertiroidismo", "copd": "EPOC",
        "diabetes_type1": "Diabetes mellitus tipo 1",
        "diabetes_type2": "Diabetes mellitus tipo 2",
        "dyslipidemia": "Dislipemia", "hypercholesterolemia": "Hipercolesterolemia",
        "flutter": "Flutter auricular", "heart_failure": "Insuficiencia cardiaca",
        "metabolic_syndrome": "Síndrome metabólico",
        "hypertension": "Hipertensión arterial",
        "ischemic_cardiomyopathy": "Cardiopatía isquémica", "stroke": "Ictus",
        "myocardiopathy": "Miocardiopatía", "branch_block": "Bloqueo de rama izquierda",
        "atrioventricular_block": "Bloqueo auriculoventricular",
        "bradycardia": "Bradicardia", "premature_contractions": "Extrasístoles",
        "sinus_node_dysfunction": "Disfunción del nodo sinusal",
        "rheumatic_valve_disease": "Valvulopatía reumática",
        "peripheral_arteriopathy": "Arteriopatía periférica",
    },
    "en": {
        "depression": "Depression", "alcohol": "Alcohol abuse",
        "drug_dependence": "Drug dependence", "anxiety": "Anxiety",
        "dementia": "Dementia", "renal_insufficiency": "Chronic kidney disease",
        "menopause": "Menopause", "osteoporosis": "Osteoporosis",
        "smoking": "Smoker", "sahos": "Sleep apnea",
        "hyperthyroidism": "Hyperthyroidism", "copd": "COPD",
        "diabetes_type1": "Diabetes type 1", "diabetes_type2": "Diabetes type 2",
        "dyslipidemia": "Dyslipidemia", "hypercholesterolemia": "Hypercholesterolemia",
        "flutter": "Flutter", "heart_failure": "Heart failure",
        "metabolic_syndrome": "Metabolic syndrome", "hypertension": "Arterial hypertension",
        "ischemic_cardiomyopathy": "Ischemic heart disease", "stroke": "Stroke",
        "myocardiopathy": "Cardiomyopathy", "branch_block": "Bundle branch block",
        "atrioventricular_block": "AV block", "bradycardia": "Bradycardia",
        "premature_contractions": "Premature contractions",
        "sinus_node_dysfunction": "Sinus node dysfunction",
        "rheumatic_valve_disease": "Rheumatic valve disease",
        "peripheral_arteriopathy": "Peripheral artery disease",
    },
}

DRUG_PHRASES = {
    "b01a": ("Apixaban", "Acenocumarol"), "n02ba01": ("Aspirina",),
    "a02bc": ("Omeprazol", "Pantoprazol"), "c03": ("Furosemida", "Torasemida"),
    "g03a": ("Etinilestradiol",), "a10": ("Metformina", "Insulina"),
    "n06a": ("Sertralina", "Escitalopram"), "n05a": ("Quetiapina", "Risperidona"),
    "n05b": ("Lorazepam", "Diazepam"), "c01": ("Digoxina", "Amiodarona"),
    "c02": ("Doxazosina",), "c04": ("Pentoxifilina",),
    "c07": ("Bisoprolol", "Atenolol"), "c08": ("Amlodipino", "Diltiazem"),
    "c09": ("Enalapril", "Ramipril"), "c10": ("Atorvastatina", "Simvastatina"),
}

LAB_PHRASES = {
    "es": {
        "urea": "Urea", "creatinine": "Creatinina", "albumin": "Albúmina",
        "glucose": "Glucosa", "hba1c": "HbA1c", "potassium": "Potasio",
        "calcium": "Calcio", "hdl_cholesterol": "Colesterol HDL",
        "ldl_cholesterol": "Colesterol LDL", "non_hdl_cholesterol": "Colesterol no HDL",
        "cholesterol": "Colesterol total", "ntprobnp": "NT-proBNP",
        "troponin_tnt": "Troponina TnT", "fibrinogen": "Fibrinógeno",
        "leukocytes": "Leucocitos", "pcr": "PCR", "tsh": "TSH", "sodium": "Sodio",
    },
    "en": {
        "urea": "Urea", "creatinine": "Creatinine", "albumin": "Albumin",
        "glucose": "Glucose", "hba1c": "HbA1c", "potassium": "Potassium",
        "calcium": "Calcium", "hdl_cholesterol": "HDL cholesterol",
        "ldl_cholesterol": "LDL cholesterol", "non_hdl_cholesterol": "Non-HDL cholesterol",
        "cholesterol": "Total cholesterol", "ntprobnp": "NT-proBNP",
        "troponin_tnt": "Troponin TnT", "fibrinogen": "Fibrinogen",
        "leukocytes": "Leukocytes", "pcr": "CRP", "tsh": "TSH", "sodium": "Sodium",
    },
}

VALVE_PHRASES = {
    "es": {
        "mitral_insufficiency": ("Insuficiencia mitral grado {g}", "Sin insuficiencia mitral"),
        "mitral_stenosis": ("Estenosis mitral grado {g}", "Sin estenosis mitral"),
        "aortic_stenosis": ("Estenosis aórtica grado {g}", "Sin estenosis aórtica"),
        "aortic_insufficiency": ("Insuficiencia aórtica grado {g}", "Sin insuficiencia aórtica"),
        "tricuspid_insufficiency": ("Insuficiencia tricuspídea grado {g}", "Sin insuficiencia tricuspídea"),
    },
    "en": {
        "mitral_insufficiency": ("Mitral regurgitation grade {g}", "No mitral regurgitation"),
        "mitral_stenosis": ("Mitral stenosis grade {g}", "No mitral stenosis"),
        "aortic_stenosis": ("Aortic stenosis grade {g}", "No aortic stenosis"),
        "aortic_insufficiency": ("Aortic regurgitation grade {g}", "No aortic regurgitation"),
        "tricuspid_insufficiency": ("Tricuspid regurgitation grade {g}", "No tricuspid regurgitation"),
    },
}

AF_SURFACES = {
    "es": ("Fibrilación auricular", "FA", "ACxFA"),
    "en": ("Atrial fibrillation", "AF"),
}

AF_TYPE_WORDS = {
    "es": {1: "paroxística", 2: "persistente", 3: "permanente"},
    "en": {1: "paroxysmal", 2: "persistent", 3: "permanent"},
}

HEADERS = {
    "es": {
        "reason": "MOTIVO DE CONSULTA", "history": "ANTECEDENTES PERSONALES",
        "current": "ENFERMEDAD ACTUAL", "exam": "EXPLORACION GENERAL",
        "tests": "PRUEBAS COMPLEMENTARIAS", "diagnosis": "DIAGNOSTICO",
        "treatment": "TRATAMIENTO", "evolution": "EVOLUCION",
    },
    "en": {
        "reason": "REASON FOR CONSULTATION", "history": "PAST MEDICAL HISTORY",
        "current": "CURRENT DISEASE", "exam": "GENERAL EXPLORATION",
        "tests": "COMPLEMENTARY TESTS", "diagnosis": "DIAGNOSIS",
        "treatment": "TREATMENT", "evolution": "EVOLUTION",
    },
}

_DISTRACTORS = {
    "es": ("Afebril y hemodinámicamente estable.",
           "Buena tolerancia oral.",
           "Niega dolor torácico."),
    "en": ("Afebrile and hemodynamically stable.",
           "Good oral tolerance.",
           "Denies chest pain."),
}


@dataclass(frozen=True)
class TruthRow:
    patient_id: str
    onset_report_id: str
    onset_date: Date
    label: RecurrenceLabel
    excluded: bool
    exclusion_reason: str | None
    cells: dict  # expected merged cells (planted values only)


@dataclass
class SyntheticCorpus:
    reports: list[DischargeReport]
    coded: list[CodedRecord]
    truth: list[TruthRow]
    death_dates: dict  # patient_id -> Date


def _decimal(value_str: str, language: str) -> str:
    return value_str.replace(".", ",") if language == "es" else value_str


def _sample_numeric(rng: np.random.Generator, column: str) -> float:
    mean, sd, lo, hi, decimals = NUMERIC_STATS[column]
    for _ in range(64):
        value = rng.normal(mean, sd)
        if lo <= value <= hi:
            break
    else:
        value = min(max(mean, lo), hi)
    # Round through the rendered string so text, CSV and truth agree bit-exactly.
    return float(f"{value:.{decimals}f}")


def _render_value(value: float, column: str, language: str) -> str:
    decimals = NUMERIC_STATS[column][4]
    return _decimal(f"{value:.{decimals}f}", language)


def _patient_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def generate(config: GeneratorConfig) -> SyntheticCorpus:
    """Generate the full synthetic corpus for one configuration."""
    lang = config.language
    reports: list[DischargeReport] = []
    coded: list[CodedRecord] = []
    truth: list[TruthRow] = []
    death_dates: dict[str, Date] = {}
    base_date = Date(2016, 1, 1)

    for i in range(config.n_patients):
        rng = _patient_rng(config.seed, i)
        pid = f"P{i:05d}"

        female = rng.random() < config.female_fraction
        age_mean = config.age_mean_female if female else config.age_mean_male
        for _ in range(64):
            age = float(int(round(rng.normal(age_mean, config.age_sd))))
            if 18 <= age <= 103:
                break
        else:
            age = float(int(round(age_mean)))

        onset_date = base_date + timedelta(days=int(rng.integers(0, 1461)))
        af_type = int(rng.choice(4, p=_normalized(AF_TYPE_DISTRIBUTION)))

        cells: dict[str, float] = {
            "gender": 1.0 if female else 0.0,
            "age": age,
            "pensioner": 1.0 if rng.random() < DEMOG_PREVALENCE["pensioner"] else 0.0,
            "resident": 1.0 if rng.random() < DEMOG_PREVALENCE["resident"] else 0.0,
            "weight": _sample_numeric(rng, "weight"),
            "height": _sample_numeric(rng, "height"),
            "bmi": _sample_numeric(rng, "bmi"),
        }

        conditions = {c: rng.random() < p for c, p in HISTORY_PREVALENCE.items()}
        affirmed = [c for c in HISTORY_PREVALENCE if conditions[c]]
        absent = [c for c in HISTORY_PREVALENCE if not conditions[c]]
        n_negated = int(rng.integers(2, 5))
        negated = [absent[j] for j in sorted(rng.choice(len(absent), size=min(n_negated, len(absent)), replace=False))]
        for c in affirmed:
            cells[c] = 1.0
        for c in negated:
            cells[c] = 0.0

        valves: dict[str, int] = {}
        for valve, dist in VALVE_DISTRIBUTIONS.items():
            grade = int(rng.choice(len(dist), p=_normalized(dist)))
            if grade > 0:
                valves[valve] = grade
                cells[valve] = float(grade)
            elif rng.random() < 0.2:
                valves[valve] = 0  # explicitly denied in the text
                cells[valve] = 0.0

        lab_columns = sorted(LAB_CODE_BY_COLUMN)
        planted_labs = [c for c in lab_columns if rng.random() < 0.7]
        for c in planted_labs:
            cells[c] = _sample_numeric(rng, c)

        drugs = [c for c, p in DRUG_PREVALENCE.items() if rng.random() < p]
        for c in drugs:
            cells[c] = 1.0

        echo = rng.random() < ECHO_RATE
        cells["electrocardiogram"] = 1.0
        echo_values: dict[str, float] = {}
        if echo:
            cells["echocardiogram"] = 1.0
            for c in ("lvef", "la_diameter", "la_area"):
                echo_values[c] = _sample_numeric(rng, c)
                cells[c] = echo_values[c]
            la_size = int(rng.integers(0, 4))
            echo_values["la_size"] = float(la_size)
            cells["la_size"] = float(la_size)

        cells["new_af_diagnosis"] = 1.0
        cells["prior_af_in_history"] = 0.0
        cells["af_type"] = float(af_type)
        cells["potential_recurrence"] = 0.0

        # Label: prevalence applies to the labeled (non-discarded) population.
        if rng.random() < config.discard_fraction:
            label = RecurrenceLabel.DISCARDED
        elif rng.random() < config.recurrence_prevalence:
            label = RecurrenceLabel.RECURRED
        else:
            label = RecurrenceLabel.NO_RECURRENCE

        # Exclusions: age over 90 checked first, then early death.
        death: Date | None = None
        if rng.random() < config.early_death_fraction:
            death = onset_date + timedelta(days=int(rng.integers(0, 93)))
        elif rng.random() < 0.05:
            death = onset_date + timedelta(days=int(rng.integers(93, 801)))
        if death is not None:
            death_dates[pid] = death
        if age > 90:
            excluded, reason = True, "age_over_90"
        elif death is not None and death <= onset_date + timedelta(days=92):
            excluded, reason = True, "early_death"
        else:
            excluded, reason = False, None

        report_seq = 0

        def next_report_id() -> str:
            nonlocal report_seq
            report_seq += 1
            return f"{pid}-R{report_seq}"

        onset_report_id = next_report_id()
        reports.append(DischargeReport(
            report_id=onset_report_id, patient_id=pid, date=onset_date,
            body=_onset_body(rng, lang, cells, affirmed, negated, valves,
                             planted_labs, drugs, echo_values, af_type),
        ))

        if rng.random() < config.pre_onset_report_prob and affirmed:
            pre_date = onset_date - timedelta(days=int(rng.integers(30, 801)))
            take = sorted(rng.choice(len(affirmed), size=min(3, len(affirmed)), replace=False))
            reports.append(DischargeReport(
                report_id=next_report_id(), patient_id=pid, date=pre_date,
                body=_pre_onset_body(lang, [affirmed[j] for j in take]),
            ))

        recurrence_date: Date | None = None
        if label is RecurrenceLabel.RECURRED:
            recurrence_date = onset_date + timedelta(days=int(rng.integers(31, 701)))
            reports.append(DischargeReport(
                report_id=next_report_id(), patient_id=pid, date=recurrence_date,
                body=_recurrence_body(rng, lang, onset_date),
            ))
            if rng.random() < 0.3:
                late = onset_date + timedelta(days=int(rng.integers(731, 900)))
                reports.append(DischargeReport(
                    report_id=next_report_id(), patient_id=pid, date=late,
                    body=_recurrence_body(rng, lang, onset_date),
                ))
        elif label is RecurrenceLabel.NO_RECURRENCE:
            sinus_date = onset_date + timedelta(days=int(rng.integers(31, 701)))
            reports.append(DischargeReport(
                report_id=next_report_id(), patient_id=pid, date=sinus_date,
                body=_sinus_body(lang),
            ))
        else:
            if rng.random() < 0.5:
                other_date = onset_date + timedelta(days=int(rng.integers(31, 701)))
                reports.append(DischargeReport(
                    report_id=next_report_id(), patient_id=pid, date=other_date,
                    body=_unrelated_body(lang),
                ))

        coded.extend(_coded_rows(rng, pid, onset_date, cells, affirmed, planted_labs,
                                 drugs, echo, af_type, recurrence_date))

        truth.append(TruthRow(
            patient_id=pid, onset_report_id=onset_report_id, onset_date=onset_date,
            label=label, excluded=excluded, exclusion_reason=reason, cells=cells,
        ))

    if config.corruption_rate > 0.0:
        keep_rng = np.random.default_rng([config.seed, 10**9])
        coded = [r for r in coded if keep_rng.random() >= config.corruption_rate]

    reports.sort(key=lambda r: (r.patient_id, r.date, r.report_id))
    coded.sort(key=lambda r: (r.patient_id, r.date, r.code_system.value, r.code))
    return SyntheticCorpus(reports=reports, coded=coded, truth=truth,
                           death_dates=death_dates)


def _normalized(dist) -> np.ndarray:
    arr = np.asarray(dist, dtype=float)
    return arr / arr.sum()


def _pick(rng: np.random.Generator, options) -> str:
    return options[int(rng.integers(0, len(options)))]


def _onset_body(rng, lang, cells, affirmed, negated, valves, planted_labs,
                drugs, echo_values, af_type) -> str:
    h = HEADERS[lang]
    phrases = CONDITION_PHRASES[lang]
    negation = "No" if lang == "en" else _pick(rng, ("No", "Niega"))

    history_bits = [f"{phrases[c]}." for c in affirmed]
    history_bits += [f"{negation} {_lower_first(phrases[c])}." for c in negated]
    for valve, grade in valves.items():
        with_grade, denied = VALVE_PHRASES[lang][valve]
        history_bits.append(f"{with_grade.format(g=grade)}." if grade > 0 else f"{denied}.")
    if cells["pensioner"] == 1.0:
        history_bits.append("Pensionista." if lang == "es" else "Pensioner.")
    else:
        history_bits.append("Activo laboralmente." if lang == "es" else "Currently employed.")
    if cells["resident"] == 1.0:
        history_bits.append("Vive en residencia." if lang == "es" else "Nursing home resident.")
    else:
        history_bits.append("Vive en su domicilio." if lang == "es" else "Community dwelling.")

    who = ("Mujer" if cells["gender"] == 1.0 else "Varón") if lang == "es" else \
        ("Woman" if cells["gender"] == 1.0 else "Man")
    age = int(cells["age"])
    current = (f"{who} de {age} años que acude por palpitaciones de inicio brusco."
               if lang == "es" else
               f"{who} of {age} years presenting with sudden-onset palpitations.")

    exam_bits = [
        f"Peso: {_render_value(cells['weight'], 'weight', lang)} kg."
        if lang == "es" else f"Weight: {_render_value(cells['weight'], 'weight', lang)} kg.",
        f"Talla: {_render_value(cells['height'], 'height', lang)} m."
        if lang == "es" else f"Height: {_render_value(cells['height'], 'height', lang)} m.",
        f"IMC: {_render_value(cells['bmi'], 'bmi', lang)}."
        if lang == "es" else f"BMI: {_render_value(cells['bmi'], 'bmi', lang)}.",
    ]

    ecg_finding = ("Electrocardiograma: fibrilación auricular con respuesta ventricular rápida."
                   if lang == "es" else
                   "Electrocardiogram: atrial fibrillation with rapid ventricular response.")
    tests_bits = [ecg_finding]
    lab_names = LAB_PHRASES[lang]
    tests_bits += [f"{lab_names[c]}: {_render_value(cells[c], c, lang)}." for c in planted_labs]
    if echo_values:
        if lang == "es":
            tests_bits.append("Ecocardiograma realizado.")
            tests_bits.append(f"FEVI: {_render_value(echo_values['lvef'], 'lvef', lang)} %.")
            tests_bits.append(
                f"Diámetro aurícula izquierda: {_render_value(echo_values['la_diameter'], 'la_diameter', lang)} mm.")
            tests_bits.append(
                f"Área aurícula izquierda: {_render_value(echo_values['la_area'], 'la_area', lang)} cm2.")
            tests_bits.append(f"Aurícula izquierda grado {int(echo_values['la_size'])}.")
        else:
            tests_bits.append("Echocardiogram performed.")
            tests_bits.append(f"LVEF: {_render_value(echo_values['lvef'], 'lvef', lang)} %.")
            tests_bits.append(
                f"Left atrial diameter: {_render_value(echo_values['la_diameter'], 'la_diameter', lang)} mm.")
            tests_bits.append(
                f"Left atrial area: {_render_value(echo_values['la_area'], 'la_area', lang)} cm2.")
            tests_bits.append(f"Left atrial size grade {int(echo_values['la_size'])}.")

    surface = _pick(rng, AF_SURFACES[lang])
    if af_type > 0:
        qualifier = AF_TYPE_WORDS[lang][af_type]
        dx = f"{surface} {qualifier}." if lang == "es" else f"{qualifier.capitalize()} {_lower_first(surface)}."
    else:
        dx = f"{surface}."

    treatment = ", ".join(_pick(rng, DRUG_PHRASES[c]) for c in drugs) + "." if drugs else \
        ("Control de frecuencia." if lang == "es" else "Rate control.")

    evolution = _pick(rng, _DISTRACTORS[lang])

    return "\n".join([
        f"{h['reason']}: " + ("Palpitaciones y disnea de esfuerzo." if lang == "es"
                              else "Palpitations and exertional dyspnea."),
        f"{h['history']}: " + " ".join(history_bits),
        f"{h['current']}: {current}",
        f"{h['exam']}: " + " ".join(exam_bits),
        f"{h['tests']}: " + " ".join(tests_bits),
        f"{h['diagnosis']}: {dx}",
        f"{h['treatment']}: {treatment}",
        f"{h['evolution']}: {evolution}",
    ])


def _lower_first(text: str) -> str:
    return text[0].lower() + text[1:] if text else text


def _pre_onset_body(lang, conditions) -> str:
    h = HEADERS[lang]
    phrases = CONDITION_PHRASES[lang]
    history = " ".join(f"{phrases[c]}." for c in conditions)
    if lang == "es":
        return "\n".join([
            f"{h['reason']}: Disnea.",
            f"{h['history']}: {history}",
            f"{h['current']}: Reagudización de su patología de base.",
            f"{h['diagnosis']}: Infección respiratoria.",
            f"{h['evolution']}: Mejoría progresiva.",
        ])
    return "\n".join([
        f"{h['reason']}: Dyspnea.",
        f"{h['history']}: {history}",
        f"{h['current']}: Worsening of baseline condition.",
        f"{h['diagnosis']}: Respiratory infection.",
        f"{h['evolution']}: Progressive improvement.",
    ])


def _recurrence_body(rng, lang, onset_date: Date) -> str:
    h = HEADERS[lang]
    year = onset_date.year
    if lang == "es":
        surface = _pick(rng, AF_SURFACES["es"])
        return "\n".join([
            f"{h['reason']}: Palpitaciones.",
            f"{h['history']}: Fibrilación auricular diagnosticada en {year}.",
            f"{h['current']}: Nuevo episodio de palpitaciones.",
            f"{h['tests']}: Electrocardiograma: {_lower_first(surface)} con respuesta ventricular controlada.",
            f"{h['diagnosis']}: Recidiva de {_lower_first(surface)}.",
            f"{h['treatment']}: Control de frecuencia.",
            f"{h['evolution']}: Estable al alta.",
        ])
    surface = _pick(rng, AF_SURFACES["en"])
    return "\n".join([
        f"{h['reason']}: Palpitations.",
        f"{h['history']}: Atrial fibrillation diagnosed in {year}.",
        f"{h['current']}: New episode of palpitations.",
        f"{h['tests']}: Electrocardiogram: {_lower_first(surface)} with controlled ventricular response.",
        f"{h['diagnosis']}: Recurrence of {_lower_first(surface)}.",
        f"{h['treatment']}: Rate control.",
        f"{h['evolution']}: Stable at discharge.",
    ])


def _sinus_body(lang) -> str:
    h = HEADERS[lang]
    if lang == "es":
        return "\n".join([
            f"{h['reason']}: Revisión cardiológica.",
            f"{h['history']}: Fibrilación auricular previa.",
            f"{h['current']}: Asintomático desde el alta.",
            f"{h['tests']}: Electrocardiograma: ritmo sinusal a 70 lpm.",
            f"{h['diagnosis']}: Buen control clínico.",
            f"{h['evolution']}: Alta de consulta.",
        ])
    return "\n".join([
        f"{h['reason']}: Cardiology follow-up.",
        f"{h['history']}: Previous atrial fibrillation.",
        f"{h['current']}: Asymptomatic since discharge.",
        f"{h['tests']}: Electrocardiogram: sinus rhythm at 70 bpm.",
        f"{h['diagnosis']}: Good clinical control.",
        f"{h['evolution']}: Discharged from clinic.",
    ])


def _unrelated_body(lang) -> str:
    h = HEADERS[lang]
    if lang == "es":
        return "\n".join([
            f"{h['reason']}: Dolor en rodilla derecha.",
            f"{h['current']}: Gonalgia mecánica de semanas de evolución.",
            f"{h['diagnosis']}: Gonartrosis.",
            f"{h['treatment']}: Paracetamol.",
            f"{h['evolution']}: Mejoría con tratamiento conservador.",
        ])
    return "\n".join([
        f"{h['reason']}: Right knee pain.",
        f"{h['current']}: Mechanical knee pain for several weeks.",
        f"{h['diagnosis']}: Knee osteoarthritis.",
        f"{h['treatment']}: Paracetamol.",
        f"{h['evolution']}: Improvement with conservative treatment.",
    ])


def _coded_rows(rng, pid, onset_date, cells, affirmed, planted_labs, drugs,
                echo, af_type, recurrence_date) -> list[CodedRecord]:
    rows = [CodedRecord(pid, onset_date, CodeSystem.ICD10, AF_ICD_BY_TYPE[af_type])]
    for column, value in (("AGE", cells["age"]), ("SEX", cells["gender"]),
                          ("PENSIONER", cells["pensioner"]), ("RESIDENT", cells["resident"]),
                          ("WEIGHT", cells["weight"]), ("HEIGHT", cells["height"]),
                          ("BMI", cells["bmi"])):
        rows.append(CodedRecord(pid, onset_date, CodeSystem.DEMOG, column, value=value))
    for c in affirmed:
        when = onset_date - timedelta(days=int(rng.integers(0, 901)))
        rows.append(CodedRecord(pid, when, CodeSystem.ICD10, ICD_BY_COLUMN[c]))
    for c in planted_labs:
        when = onset_date + timedelta(days=int(rng.integers(-120, 61)))
        code, unit = LAB_CODE_BY_COLUMN[c]
        rows.append(CodedRecord(pid, when, CodeSystem.LAB, code, value=cells[c], unit=unit))
    for c in drugs:
        when = onset_date - timedelta(days=int(rng.integers(0, 121)))
        rows.append(CodedRecord(pid, when, CodeSystem.ATC, ATC_BY_COLUMN[c]))
    rows.append(CodedRecord(pid, onset_date, CodeSystem.PROC, "ECG"))
    if echo:
        rows.append(CodedRecord(pid, onset_date, CodeSystem.PROC, "ECHO"))
    if recurrence_date is not None and rng.random() < 0.5:
        rows.append(CodedRecord(pid, recurrence_date, CodeSystem.ICD10,
                                AF_ICD_BY_TYPE[af_type]))
    return rows


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

TRUTH_FIXED_COLUMNS = ["patient_id", "onset_report_id", "onset_date", "label",
                       "excluded", "exclusion_reason"]


def save_truth(path: str | Path, truth: list[TruthRow], schema: FeatureSchema,
               provenance: dict | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            for key in sorted(provenance):
                fh.write(f"# {key}={provenance[key]}\n")
        writer = csv.writer(fh)
        writer.writerow(TRUTH_FIXED_COLUMNS + schema.names)
        for row in truth:
            out = [row.patient_id, row.onset_report_id, row.onset_date.isoformat(),
                   row.label.value, "1" if row.excluded else "0",
                   row.exclusion_reason or ""]
            for name in schema.names:
                value = row.cells.get(name)
                if value is None:
                    out.append("")
                elif value == int(value):
                    out.append(str(int(value)))
                else:
                    out.append(repr(value))
            writer.writerow(out)


def load_truth(path: str | Path, schema: FeatureSchema) -> list[TruthRow]:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    header, body = rows[0], rows[1:]
    if header != TRUTH_FIXED_COLUMNS + schema.names:
        raise CorpusError(f"{path}: truth header does not match the schema")
    out = []
    for row in body:
        cells = {}
        for name, raw in zip(schema.names, row[len(TRUTH_FIXED_COLUMNS):]):
            if raw != "":
                cells[name] = float(raw)
        out.append(TruthRow(
            patient_id=row[0], onset_report_id=row[1],
            onset_date=parse_date(row[2], f"truth row {row[0]}"),
            label=RecurrenceLabel(row[3]), excluded=row[4] == "1",
            exclusion_reason=row[5] or None, cells=cells,
        ))
    return out


def save_death_dates(path: str | Path, death_dates: dict,
                     provenance: dict | None = None) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        if provenance:
            for key in sorted(provenance):
                fh.write(f"# {key}={provenance[key]}\n")
        writer = csv.writer(fh)
        writer.writerow(["patient_id", "death_date"])
        for pid in sorted(death_dates):
            writer.writerow([pid, death_dates[pid].isoformat()])


def load_death_dates(path: str | Path) -> dict:
    with open(path, newline="", encoding="utf-8") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    rows = list(csv.reader(lines))
    if not rows or rows[0] != ["patient_id", "death_date"]:
        raise CorpusError(f"{path}: bad death-dates header")
    return {pid: parse_date(raw, f"death date for {pid}") for pid, raw in rows[1:]}


def generate_to_dir(config: GeneratorConfig, out_dir: str | Path,
                    provenance: dict | None = None) -> SyntheticCorpus:
    """Generate and write reports.jsonl, coded.csv, truth.csv and deaths.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    corpus = generate(config)
    schema = canonical_schema()
    save_corpus(out_dir / "reports.jsonl", corpus.reports, provenance)
    save_coded_records(out_dir / "coded.csv", corpus.coded, provenance)
    save_truth(out_dir / "truth.csv", corpus.truth, schema, provenance)
    save_death_dates(out_dir / "deaths.csv", corpus.death_dates, provenance)
    return corpus
