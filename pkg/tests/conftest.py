from datetime import date

import pytest

from afrec.data_model import DischargeReport, canonical_schema
from afrec.entity_extractor import apply_negation, bundled_rulepack, extract_entities
from afrec.pipeline import Resources
from afrec.section_parser import bundled_lexicon, parse_sections
from afrec.structured2vector import bundled_code_map
from afrec.synthetic_corpus import GeneratorConfig, generate
from afrec.vector_merger import bundled_windows


@pytest.fixture(scope="session")
def schema():
    return canonical_schema()


@pytest.fixture(scope="session")
def lexicon():
    return bundled_lexicon()


@pytest.fixture(scope="session")
def rulepack():
    return bundled_rulepack()


@pytest.fixture(scope="session")
def code_map():
    return bundled_code_map()


@pytest.fixture(scope="session")
def windows():
    return bundled_windows()


@pytest.fixture(scope="session")
def resources():
    return Resources.bundled()


@pytest.fixture(scope="session")
def small_corpus():
    """A 40-patient synthetic corpus shared by the slower tests."""
    return generate(GeneratorConfig(n_patients=40, seed=123))


def make_report(body: str, report_id="R1", patient_id="P1",
                when=date(2020, 6, 15)) -> DischargeReport:
    return DischargeReport(report_id=report_id, patient_id=patient_id,
                           date=when, body=body)


def annotated(body: str, lexicon, rulepack, **kw):
    """Sectioned report plus negation-resolved mentions for a body string."""
    sectioned = parse_sections(make_report(body, **kw), lexicon)
    mentions = apply_negation(extract_entities(sectioned, rulepack), sectioned, rulepack)
    return sectioned, mentions
