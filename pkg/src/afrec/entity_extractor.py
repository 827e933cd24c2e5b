"""Rule-based medical entity recognition, negation detection and AF-onset
classification over sectioned reports.

Matching is case- and diacritic-insensitive (see textnorm) and follows a
leftmost-longest discipline: all rules compete for spans, the earliest
longest match wins, overlaps are dropped. Negation is NegEx-style: a cue
negates mentions to its right inside the same sentence, up to 6 tokens or
until a clause boundary (comma) or coordinating conjunction.
"""

from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass, replace
from enum import Enum
from importlib import resources
from pathlib import Path

from .data_model import CanonicalSection, CorpusError, FeatureSchema, SectionedReport
from .textnorm import fold, sentence_spans, token_spans

log = logging.getLogger(__name__)


class EntityLabel(str, Enum):
    DISEASE = "disease"
    DRUG = "drug"
    PROCEDURE = "procedure"
    QUALIFIER = "qualifier"
    BODY_STRUCTURE = "body_structure"
    ALLERGY = "allergy"


class AFType(int, Enum):
    UNSPECIFIED = 0
    PAROXYSMAL = 1
    PERSISTENT = 2
    PERMANENT = 3


#: Flag targets a rule may set instead of a feature column.
FLAG_TARGETS = (
    "af_term",
    "af_type_paroxysmal",
    "af_type_persistent",
    "af_type_permanent",
    "sinus_rhythm",
)

_AF_TYPE_BY_FLAG = {
    "af_type_paroxysmal": AFType.PAROXYSMAL,
    "af_type_persistent": AFType.PERSISTENT,
    "af_type_permanent": AFType.PERMANENT,
}

# Tokens that close a negation scope early. "ni" is itself a cue, not a
# terminator, so chained negative lists stay negated.
_SCOPE_TERMINATORS = {"y", "e", "o", "u", "pero", "and", "or", "but"}
_NEGATION_WINDOW_TOKENS = 6


@dataclass(frozen=True)
class EntityRule:
    pattern: str
    label: EntityLabel
    target_kind: str  # "column" | "flag"
    target: str
    set_value: int = 1  # value an affirmed binary mention writes
    regex: re.Pattern = None

    def __post_init__(self):
        object.__setattr__(self, "regex", re.compile(self.pattern))


@dataclass(frozen=True)
class NumericRule:
    pattern: str  # exactly one capture group
    column: str
    unit: str | None
    label: EntityLabel = EntityLabel.PROCEDURE
    regex: re.Pattern = None

    def __post_init__(self):
        compiled = re.compile(self.pattern)
        if compiled.groups != 1:
            raise CorpusError(f"numeric rule {self.pattern!r} needs exactly one capture group")
        object.__setattr__(self, "regex", compiled)


@dataclass(frozen=True)
class RulePack:
    entity_rules: tuple[EntityRule, ...]
    negation_cues: tuple[re.Pattern, ...]
    numeric_rules: tuple[NumericRule, ...]


@dataclass(frozen=True)
class EntityMention:
    """One matched span, attributed to the section containing it."""

    start: int  # absolute offsets in the report body
    end: int
    section: str
    label: EntityLabel
    target_kind: str
    target: str
    negated: bool = False
    value: float | None = None
    set_value: int = 1

    @property
    def is_flag(self) -> bool:
        return self.target_kind == "flag"


def _parse_target(raw: str) -> tuple[str, str]:
    kind, _, name = raw.partition(":")
    if kind not in ("column", "flag") or not name:
        raise CorpusError(f"bad rule target {raw!r}; expected column:<name> or flag:<name>")
    if kind == "flag" and name not in FLAG_TARGETS:
        raise CorpusError(f"unknown flag target {name!r}")
    return kind, name


def load_rulepack(path: str | Path) -> RulePack:
    """Load a rule pack JSON with ``entities``, ``negation_cues`` and
    ``numeric_captures`` arrays."""
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    entities = []
    for raw in obj.get("entities", []):
        kind, name = _parse_target(raw["target"])
        try:
            entities.append(
                EntityRule(
                    pattern=raw["pattern"],
                    label=EntityLabel(raw.get("label", "disease")),
                    target_kind=kind,
                    target=name,
                    set_value=int(raw.get("set_value", 1)),
                )
            )
        except re.error as exc:
            raise CorpusError(f"entity pattern {raw['pattern']!r} does not compile ({exc})") from None
    cues = []
    for pattern in obj.get("negation_cues", []):
        try:
            cues.append(re.compile(pattern))
        except re.error as exc:
            raise CorpusError(f"negation cue {pattern!r} does not compile ({exc})") from None
    numerics = []
    for raw in obj.get("numeric_captures", []):
        numerics.append(
            NumericRule(
                pattern=raw["pattern"],
                column=raw["column"],
                unit=raw.get("unit"),
                label=EntityLabel(raw.get("label", "procedure")),
            )
        )
    return RulePack(entity_rules=tuple(entities), negation_cues=tuple(cues),
                    numeric_rules=tuple(numerics))


def bundled_rulepack() -> RulePack:
    with resources.as_file(resources.files("afrec.resources") / "rulepack.json") as p:
        return load_rulepack(p)


def validate_rulepack(pack: RulePack, schema: FeatureSchema) -> None:
    """Every referenced feature column must exist in the active schema."""
    for rule in pack.entity_rules:
        if rule.target_kind == "column" and rule.target not in schema:
            raise CorpusError(f"rule {rule.pattern!r} targets unknown column {rule.target!r}")
    for rule in pack.numeric_rules:
        if rule.column not in schema:
            raise CorpusError(f"numeric rule {rule.pattern!r} targets unknown column {rule.column!r}")


def _parse_number(raw: str) -> float | None:
    try:
        return float(raw.replace(",", "."))
    except ValueError:
        return None


def extract_entities(sectioned: SectionedReport, rules: RulePack) -> list[EntityMention]:
    """All non-overlapping leftmost-longest matches with section attribution.

    Numeric captures are parsed with decimal-comma normalization; a capture
    that fails to parse is still emitted, with value=None and a logged
    warning.
    """
    mentions: list[EntityMention] = []
    for section in sectioned.sections:
        content = section.content
        offset = section.header_end
        folded = fold(content)
        candidates = []
        for rule in rules.entity_rules:
            for m in rule.regex.finditer(folded):
                if m.end() == m.start():
                    continue
                candidates.append(
                    (m.start(), -(m.end() - m.start()), rule.label.value, rule.target,
                     EntityMention(
                         start=offset + m.start(), end=offset + m.end(),
                         section=section.name, label=rule.label,
                         target_kind=rule.target_kind, target=rule.target,
                         set_value=rule.set_value,
                     ))
                )
        for rule in rules.numeric_rules:
            for m in rule.regex.finditer(folded):
                if m.end() == m.start():
                    continue
                value = _parse_number(m.group(1))
                if value is None:
                    log.warning(
                        "report %s: numeric capture %r failed to parse in column %s",
                        sectioned.report.report_id, m.group(1), rule.column,
                    )
                candidates.append(
                    (m.start(), -(m.end() - m.start()), rule.label.value, rule.column,
                     EntityMention(
                         start=offset + m.start(), end=offset + m.end(),
                         section=section.name, label=rule.label,
                         target_kind="column", target=rule.column, value=value,
                     ))
                )
        # Leftmost-longest, rule-order independent: earliest start wins,
        # then longest span, then (label, target) for determinism.
        candidates.sort(key=lambda c: c[:4])
        taken_until = -1
        for cand in candidates:
            mention = cand[4]
            if mention.start > taken_until:
                mentions.append(mention)
                taken_until = mention.end - 1
    return mentions


def _negated_regions(folded_content: str, rules: RulePack) -> list[tuple[int, int]]:
    """Scope regions (relative to content) where mention starts are negated."""
    regions = []
    for s_start, s_end in sentence_spans(folded_content):
        sentence = folded_content[s_start:s_end]
        cue_ends = []
        for cue in rules.negation_cues:
            cue_ends.extend(m.end() for m in cue.finditer(sentence))
        if not cue_ends:
            continue
        tokens = token_spans(sentence)
        for cue_end in sorted(set(cue_ends)):
            following = [t for t in tokens if t[0] >= cue_end]
            scope_end = cue_end
            for i, (t_start, t_end) in enumerate(following):
                if i >= _NEGATION_WINDOW_TOKENS:
                    break
                between = sentence[scope_end:t_start]
                if "," in between:
                    break
                if sentence[t_start:t_end] in _SCOPE_TERMINATORS:
                    break
                scope_end = t_end
            if scope_end > cue_end:
                regions.append((s_start + cue_end, s_start + scope_end))
    return regions


def apply_negation(mentions: list[EntityMention], sectioned: SectionedReport,
                   rules: RulePack) -> list[EntityMention]:
    """Return mentions with negated flags set per the scope rule."""
    regions_by_section: dict[tuple[str, int], list[tuple[int, int]]] = {}
    for section in sectioned.sections:
        key = (section.name, section.start)
        regions = _negated_regions(fold(section.content), rules)
        regions_by_section[key] = [
            (section.header_end + a, section.header_end + b) for a, b in regions
        ]
    out = []
    for mention in mentions:
        negated = False
        for section in sectioned.sections:
            if section.name == mention.section and section.start <= mention.start < section.end:
                for a, b in regions_by_section[(section.name, section.start)]:
                    if a <= mention.start < b:
                        negated = True
                        break
                break
        out.append(replace(mention, negated=negated) if negated else mention)
    return out


@dataclass(frozen=True)
class OnsetInfo:
    """Report-level AF classification."""

    is_af_report: bool
    is_onset: bool
    prior_af_in_history: bool
    af_type: AFType


_EVIDENCE_SECTIONS = (CanonicalSection.DIAGNOSIS.value,
                      CanonicalSection.COMPLEMENTARY_TESTS.value)


def classify_af_onset(sectioned: SectionedReport, rules: RulePack,
                      mentions: list[EntityMention] | None = None) -> OnsetInfo:
    """Classify a report as AF evidence / AF onset and type the AF.

    A report is AF evidence iff a non-negated AF term occurs in Diagnosis or
    ComplementaryTests; it is an onset iff additionally no non-negated AF
    term occurs in PastMedicalHistory.
    """
    if mentions is None:
        mentions = apply_negation(extract_entities(sectioned, rules), sectioned, rules)
    affirmed = [m for m in mentions if m.is_flag and not m.negated]
    af_terms = [m for m in affirmed if m.target == "af_term"]
    is_af_report = any(m.section in _EVIDENCE_SECTIONS for m in af_terms)
    prior = any(
        m.section == CanonicalSection.PAST_MEDICAL_HISTORY.value for m in af_terms
    )
    # A type qualifier counts only when adjacent to an AF term ("fibrilacion
    # auricular persistente", "paroxysmal atrial fibrillation"), so stray
    # qualifiers elsewhere cannot type the AF.
    def _adjacent(q: EntityMention) -> bool:
        return any(0 <= q.start - t.end <= 3 or 0 <= t.start - q.end <= 3
                   for t in af_terms)

    af_type = AFType.UNSPECIFIED
    for m in sorted(affirmed, key=lambda m: m.start):
        if m.target in _AF_TYPE_BY_FLAG and _adjacent(m):
            af_type = _AF_TYPE_BY_FLAG[m.target]
            break
    return OnsetInfo(
        is_af_report=is_af_report,
        is_onset=is_af_report and not prior,
        prior_af_in_history=prior,
        af_type=af_type,
    )


def has_sinus_rhythm_evidence(sectioned: SectionedReport, rules: RulePack,
                              mentions: list[EntityMention] | None = None) -> bool:
    """True iff a non-negated sinus-rhythm / AF-free-ECG mention occurs."""
    if mentions is None:
        mentions = apply_negation(extract_entities(sectioned, rules), sectioned, rules)
    return any(m.is_flag and m.target == "sinus_rhythm" and not m.negated for m in mentions)
