from afrec.data_model import validate_vector
from afrec.entity_extractor import apply_negation, classify_af_onset, extract_entities
from afrec.report2vector import vectorize_report
from afrec.section_parser import parse_sections

from conftest import annotated


def vector_for(body, lexicon, rulepack, schema):
    sectioned, mentions = annotated(body, lexicon, rulepack)
    info = classify_af_onset(sectioned, rulepack, mentions)
    return vectorize_report(sectioned, mentions, info, schema)


def test_negated_and_captured_cells(lexicon, rulepack, schema):
    body = ("ANTECEDENTES: no diabetes mellitus.\n"
            "PRUEBAS COMPLEMENTARIAS: FEVI: 45 %.")
    vector = vector_for(body, lexicon, rulepack, schema)
    assert vector.cells["diabetes_type2"] == 0.0
    assert vector.cells["lvef"] == 45.0
    # Unmentioned columns stay missing, never 0.
    assert "heart_failure" not in vector.cells
    assert "urea" not in vector.cells


def test_onset_report_flags(lexicon, rulepack, schema):
    vector = vector_for("DIAGNOSTICO: fibrilación auricular.", lexicon, rulepack, schema)
    assert vector.cells["new_af_diagnosis"] == 1.0
    assert vector.cells["prior_af_in_history"] == 0.0
    assert vector.cells["potential_recurrence"] == 0.0


def test_potential_recurrence_needs_prior_af(lexicon, rulepack, schema):
    body = "DIAGNOSTICO: FA.\nANTECEDENTES: fibrilación auricular previa."
    vector = vector_for(body, lexicon, rulepack, schema)
    assert vector.cells["new_af_diagnosis"] == 1.0
    assert vector.cells["prior_af_in_history"] == 1.0
    assert vector.cells["potential_recurrence"] == 1.0


def test_affirmed_wins_over_negated(lexicon, rulepack, schema):
    body = ("ANTECEDENTES: no insuficiencia cardiaca.\n"
            "DIAGNOSTICO: insuficiencia cardiaca descompensada.")
    vector = vector_for(body, lexicon, rulepack, schema)
    assert vector.cells["heart_failure"] == 1.0


def test_numeric_last_occurrence_wins(lexicon, rulepack, schema):
    body = ("PRUEBAS COMPLEMENTARIAS: FEVI: 60 %.\n"
            "EVOLUCION: control con FEVI: 45 %.")
    vector = vector_for(body, lexicon, rulepack, schema)
    assert vector.cells["lvef"] == 45.0


def test_set_value_rules_for_gender(lexicon, rulepack, schema):
    v_female = vector_for("ENFERMEDAD ACTUAL: Mujer de 70 años.", lexicon, rulepack, schema)
    v_male = vector_for("ENFERMEDAD ACTUAL: Varón de 70 años.", lexicon, rulepack, schema)
    assert v_female.cells["gender"] == 1.0
    assert v_male.cells["gender"] == 0.0
    assert v_female.cells["age"] == 70.0


def test_output_passes_schema_validation_on_random_reports(lexicon, rulepack, schema,
                                                           small_corpus):
    for report in small_corpus.reports:
        sectioned = parse_sections(report, lexicon)
        mentions = apply_negation(extract_entities(sectioned, rulepack),
                                  sectioned, rulepack)
        info = classify_af_onset(sectioned, rulepack, mentions)
        vector = vectorize_report(sectioned, mentions, info, schema)
        validate_vector(vector, schema)
        assert vector.source_report_id == report.report_id
        assert vector.date == report.date
        for flag in ("new_af_diagnosis", "prior_af_in_history",
                     "af_type", "potential_recurrence"):
            assert flag in vector.cells


def test_categorical_capture(lexicon, rulepack, schema):
    body = "ANTECEDENTES: Insuficiencia mitral grado 2."
    vector = vector_for(body, lexicon, rulepack, schema)
    assert vector.cells["mitral_insufficiency"] == 2.0


def test_denied_valve_is_zero(lexicon, rulepack, schema):
    body = "ANTECEDENTES: Sin insuficiencia mitral."
    vector = vector_for(body, lexicon, rulepack, schema)
    assert vector.cells["mitral_insufficiency"] == 0.0
