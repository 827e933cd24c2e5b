"""Section a discharge report and run rule-based extraction over it.

Shows the header lexicon at work, leftmost-longest entity matching,
NegEx-style negation scope, and report-level AF classification.
"""

from datetime import date

from afrec.data_model import DischargeReport
from afrec.entity_extractor import (
    apply_negation,
    bundled_rulepack,
    classify_af_onset,
    extract_entities,
)
from afrec.section_parser import bundled_lexicon, parse_sections

body = """MOTIVO DE CONSULTA: Palpitaciones.
ANTECEDENTES PERSONALES: Hipertensión arterial. No diabetes mellitus. EPOC. Insuficiencia mitral grado 2.
ENFERMEDAD ACTUAL: Mujer de 78 años que acude por palpitaciones de inicio brusco.
PRUEBAS COMPLEMENTARIAS: Electrocardiograma: fibrilación auricular. Creatinina: 1,20. FEVI: 48 %.
DIAGNOSTICO: Fibrilación auricular paroxística.
TRATAMIENTO: Bisoprolol, Apixaban.
EVOLUCION: Estable al alta."""

report = DischargeReport("DEMO-1", "P-DEMO", date(2020, 3, 14), body)
lexicon = bundled_lexicon()
rules = bundled_rulepack()

sectioned = parse_sections(report, lexicon)
print("sections found:")
for section in sectioned.sections:
    print(f"  {section.name:24s} [{section.start:4d}:{section.end:4d}]")

mentions = apply_negation(extract_entities(sectioned, rules), sectioned, rules)
print("\nmentions (target, section, negated, value):")
for m in mentions:
    tag = "NEG" if m.negated else "   "
    value = "" if m.value is None else f" = {m.value}"
    print(f"  {tag} {m.target:24s} @{m.section:22s}{value}")

info = classify_af_onset(sectioned, rules, mentions)
print(f"\nAF classification: af_report={info.is_af_report} onset={info.is_onset} "
      f"prior={info.prior_af_in_history} type={info.af_type.name}")
