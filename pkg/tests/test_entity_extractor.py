import random

import pytest

from afrec.data_model import CanonicalSection, CorpusError
from afrec.entity_extractor import (
    AFType,
    EntityRule,
    EntityLabel,
    RulePack,
    apply_negation,
    classify_af_onset,
    extract_entities,
    has_sinus_rhythm_evidence,
    validate_rulepack,
)
from afrec.section_parser import parse_sections
from afrec.synthetic_corpus import GeneratorConfig, generate

from conftest import annotated, make_report


def columns_of(mentions):
    return {m.target: m.negated for m in mentions if m.target_kind == "column"}


def test_disease_mention_in_diagnosis(lexicon, rulepack):
    _, mentions = annotated("DIAGNOSTICO: insuficiencia cardiaca", lexicon, rulepack)
    assert columns_of(mentions) == {"heart_failure": False}
    assert mentions[-1].section == CanonicalSection.DIAGNOSIS.value


def test_numeric_capture(lexicon, rulepack):
    _, mentions = annotated("PRUEBAS COMPLEMENTARIAS: FEVI: 45 %.", lexicon, rulepack)
    capture = [m for m in mentions if m.target == "lvef"]
    assert len(capture) == 1 and capture[0].value == 45.0


def test_empty_sections_yield_no_mentions(lexicon, rulepack):
    sectioned, mentions = annotated("nothing relevant here", lexicon, rulepack)
    assert extract_entities(sectioned, rulepack) == []


def test_negation_simple(lexicon, rulepack):
    _, mentions = annotated("ANTECEDENTES: no diabetes mellitus", lexicon, rulepack)
    assert columns_of(mentions) == {"diabetes_type2": True}


def test_negation_scope_stops_at_comma(lexicon, rulepack):
    _, mentions = annotated("ANTECEDENTES: diabetes mellitus, no HTA", lexicon, rulepack)
    assert columns_of(mentions) == {"diabetes_type2": False, "hypertension": True}


def test_negation_does_not_cross_sentences(lexicon, rulepack):
    _, mentions = annotated("ANTECEDENTES: no alergias. diabetes mellitus", lexicon, rulepack)
    assert columns_of(mentions) == {"diabetes_type2": False}


def test_negation_limited_to_six_tokens(lexicon, rulepack):
    body = "ANTECEDENTES: no a b c d e f diabetes mellitus"
    _, mentions = annotated(body, lexicon, rulepack)
    assert columns_of(mentions) == {"diabetes_type2": False}


def test_negation_stops_at_conjunction(lexicon, rulepack):
    _, mentions = annotated("ANTECEDENTES: no fumador pero diabetes mellitus",
                            lexicon, rulepack)
    assert columns_of(mentions) == {"smoking": True, "diabetes_type2": False}


def test_leftmost_longest_prefers_typed_diabetes(lexicon, rulepack):
    _, mentions = annotated("ANTECEDENTES: diabetes mellitus tipo 1", lexicon, rulepack)
    assert columns_of(mentions) == {"diabetes_type1": False}


def test_rule_order_does_not_change_mentions(lexicon, rulepack):
    body = ("ANTECEDENTES: hipertension arterial. diabetes mellitus tipo 2. "
            "no insuficiencia cardiaca.\nPRUEBAS COMPLEMENTARIAS: FEVI: 52 %. "
            "Creatinina: 1,20.")
    sectioned, baseline = annotated(body, lexicon, rulepack)
    baseline_set = {(m.start, m.end, m.target, m.negated) for m in baseline}
    rng = random.Random(5)
    for _ in range(5):
        entity_rules = list(rulepack.entity_rules)
        numeric_rules = list(rulepack.numeric_rules)
        rng.shuffle(entity_rules)
        rng.shuffle(numeric_rules)
        shuffled = RulePack(entity_rules=tuple(entity_rules),
                            negation_cues=rulepack.negation_cues,
                            numeric_rules=tuple(numeric_rules))
        mentions = apply_negation(extract_entities(sectioned, shuffled), sectioned, shuffled)
        assert {(m.start, m.end, m.target, m.negated) for m in mentions} == baseline_set


def test_mention_spans_live_in_their_sections(lexicon, rulepack, small_corpus):
    for report in small_corpus.reports[:40]:
        sectioned = parse_sections(report, lexicon)
        for m in extract_entities(sectioned, rulepack):
            section = next(s for s in sectioned.sections
                           if s.start <= m.start < s.end)
            assert section.name == m.section
            assert m.end <= section.end


def test_classify_onset_true(lexicon, rulepack):
    sectioned, mentions = annotated("DIAGNOSTICO: fibrilación auricular",
                                    lexicon, rulepack)
    info = classify_af_onset(sectioned, rulepack, mentions)
    assert (info.is_af_report, info.is_onset, info.af_type) == \
        (True, True, AFType.UNSPECIFIED)


def test_classify_prior_af_blocks_onset(lexicon, rulepack):
    body = "DIAGNOSTICO: FA\nANTECEDENTES: FA previa"
    sectioned, mentions = annotated(body, lexicon, rulepack)
    info = classify_af_onset(sectioned, rulepack, mentions)
    assert info.is_af_report and not info.is_onset and info.prior_af_in_history


def test_classify_negated_af_is_not_evidence(lexicon, rulepack):
    sectioned, mentions = annotated("DIAGNOSTICO: no evidencia de FA",
                                    lexicon, rulepack)
    info = classify_af_onset(sectioned, rulepack, mentions)
    assert info == classify_af_onset(sectioned, rulepack)
    assert (info.is_af_report, info.is_onset) == (False, False)


def test_af_term_outside_evidence_sections(lexicon, rulepack):
    sectioned, mentions = annotated("EVOLUCION: fibrilación auricular rápida",
                                    lexicon, rulepack)
    assert not classify_af_onset(sectioned, rulepack, mentions).is_af_report


@pytest.mark.parametrize("text,expected", [
    ("fibrilación auricular paroxística", AFType.PAROXYSMAL),
    ("fibrilación auricular persistente", AFType.PERSISTENT),
    ("fibrilación auricular permanente", AFType.PERMANENT),
    ("fibrilación auricular crónica", AFType.PERMANENT),
    ("fibrilación auricular", AFType.UNSPECIFIED),
])
def test_af_type_qualifiers(lexicon, rulepack, text, expected):
    sectioned, mentions = annotated(f"DIAGNOSTICO: {text}", lexicon, rulepack)
    assert classify_af_onset(sectioned, rulepack, mentions).af_type is expected


def test_stray_qualifier_does_not_type_af(lexicon, rulepack):
    body = "DIAGNOSTICO: FA. insuficiencia renal crónica"
    sectioned, mentions = annotated(body, lexicon, rulepack)
    assert classify_af_onset(sectioned, rulepack, mentions).af_type is AFType.UNSPECIFIED


def test_english_qualifier_precedes_term(lexicon, rulepack):
    sectioned, mentions = annotated("DIAGNOSIS: Paroxysmal atrial fibrillation.",
                                    lexicon, rulepack)
    info = classify_af_onset(sectioned, rulepack, mentions)
    assert info.is_af_report and info.af_type is AFType.PAROXYSMAL


def test_sinus_rhythm_evidence(lexicon, rulepack):
    sectioned, mentions = annotated(
        "PRUEBAS COMPLEMENTARIAS: Electrocardiograma: ritmo sinusal a 70 lpm.",
        lexicon, rulepack)
    assert has_sinus_rhythm_evidence(sectioned, rulepack, mentions)
    assert has_sinus_rhythm_evidence(sectioned, rulepack)
    sectioned2, mentions2 = annotated(
        "PRUEBAS COMPLEMENTARIAS: no ritmo sinusal.", lexicon, rulepack)
    assert not has_sinus_rhythm_evidence(sectioned2, rulepack, mentions2)


def test_synthetic_onset_flags_reproduced(lexicon, rulepack):
    corpus = generate(GeneratorConfig(n_patients=25, seed=77))
    onset_ids = {t.onset_report_id for t in corpus.truth}
    for report in corpus.reports:
        sectioned = parse_sections(report, lexicon)
        info = classify_af_onset(sectioned, rulepack)
        assert info.is_onset == (report.report_id in onset_ids)


def test_unparseable_numeric_capture_yields_missing_value(lexicon):
    # A permissive capture group that can match a non-numeric token.
    from afrec.entity_extractor import NumericRule
    pack = RulePack(entity_rules=(), negation_cues=(),
                    numeric_rules=(NumericRule(r"fevi (\S+)", "lvef", "%"),))
    sectioned = parse_sections(make_report("PRUEBAS COMPLEMENTARIAS: FEVI abc"), lexicon)
    mentions = extract_entities(sectioned, pack)
    assert len(mentions) == 1 and mentions[0].value is None


def test_rulepack_validation_against_schema(schema):
    pack = RulePack(
        entity_rules=(EntityRule("foo", EntityLabel.DISEASE, "column", "no_such_column"),),
        negation_cues=(), numeric_rules=())
    with pytest.raises(CorpusError, match="unknown column"):
        validate_rulepack(pack, schema)
