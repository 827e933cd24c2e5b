"""CHA2DS2-VASc, HATCH and APPLE computed from merged feature vectors.

Component tables are data, not code: each score ships as a JSON definition
(``resources/scores/``) so the point assignments can be audited or adjusted
without touching the pipeline. All three scores binarize at >= 2.

The APPLE renal component needs an eGFR, which is not a schema column; it
is derived from creatinine and age with a sex-free CKD-EPI-style curve so
that gender influences CHA2DS2-VASc only.
"""

from __future__ import annotations

import json
import logging
from collections import Counter
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path

from .data_model import (
    CorpusError,
    Dataset,
    FeatureVector,
    SchemaError,
)

log = logging.getLogger(__name__)

SCORE_NAMES = ("chads2_vasc", "hatch", "apple")

_OPS = {
    "eq": lambda a, b: a == b,
    "gte": lambda a, b: a >= b,
    "gt": lambda a, b: a > b,
    "lte": lambda a, b: a <= b,
    "lt": lambda a, b: a < b,
    "in": lambda a, b: a in b,
}


def egfr_from(vector: FeatureVector) -> float | None:
    """Sex-free CKD-EPI-style estimated GFR from creatinine and age.

    Uses a single constant set for all patients (kappa 0.9, alpha -0.411)
    so the derived feature, and therefore APPLE, is gender-invariant.
    """
    creatinine = vector.get("creatinine")
    age = vector.get("age")
    if creatinine is None or age is None or creatinine <= 0:
        return None
    ratio = creatinine / 0.9
    return 141.0 * min(ratio, 1.0) ** -0.411 * max(ratio, 1.0) ** -1.209 * 0.993 ** age


_DERIVED = {"egfr": (egfr_from, ("creatinine", "age"))}


@dataclass(frozen=True)
class Predicate:
    """One leaf or boolean combinator of the score-component condition DSL."""

    spec: dict

    def columns(self) -> set[str]:
        out: set[str] = set()
        stack = [self.spec]
        while stack:
            node = stack.pop()
            if "any" in node:
                stack.extend(node["any"])
            elif "all" in node:
                stack.extend(node["all"])
            else:
                name = node["column"]
                if name in _DERIVED:
                    out.update(_DERIVED[name][1])
                else:
                    out.add(name)
        return out

    def holds(self, vector: FeatureVector) -> bool:
        return self._eval(self.spec, vector)

    def _eval(self, node: dict, vector: FeatureVector) -> bool:
        if "any" in node:
            return any(self._eval(child, vector) for child in node["any"])
        if "all" in node:
            return all(self._eval(child, vector) for child in node["all"])
        name = node["column"]
        if name in _DERIVED:
            value = _DERIVED[name][0](vector)
        else:
            value = vector.get(name)
        if value is None:
            return False  # a missing input never scores a point
        return _OPS[node["op"]](value, node["value"])


@dataclass(frozen=True)
class ScoreComponent:
    label: str
    points: int
    when: Predicate

    def __post_init__(self):
        if self.points < 1:
            raise CorpusError(f"component {self.label}: points must be >= 1")


@dataclass(frozen=True)
class ScoreDefinition:
    name: str
    threshold: int
    components: tuple[ScoreComponent, ...]

    def __post_init__(self):
        if self.threshold < 0:
            raise CorpusError(f"score {self.name}: threshold must be >= 0")

    def referenced_columns(self) -> set[str]:
        out: set[str] = set()
        for component in self.components:
            out.update(component.when.columns())
        return out


def load_score(path: str | Path) -> ScoreDefinition:
    with open(path, encoding="utf-8") as fh:
        obj = json.load(fh)
    components = tuple(
        ScoreComponent(label=c["label"], points=int(c["points"]), when=Predicate(c["when"]))
        for c in obj["components"]
    )
    return ScoreDefinition(name=obj["name"], threshold=int(obj.get("threshold", 2)),
                           components=components)


def bundled_score(name: str) -> ScoreDefinition:
    if name not in SCORE_NAMES:
        raise CorpusError(f"unknown bundled score {name!r}")
    with resources.as_file(resources.files("afrec.resources") / "scores" / f"{name}.json") as p:
        return load_score(p)


def bundled_scores() -> dict[str, ScoreDefinition]:
    return {name: bundled_score(name) for name in SCORE_NAMES}


def evaluate_score(vector: FeatureVector, definition: ScoreDefinition) -> int:
    return sum(c.points for c in definition.components if c.when.holds(vector))


def score_classify(score: int, definition: ScoreDefinition) -> int:
    """Binary prediction at the definition's threshold (default >= 2)."""
    return int(score >= definition.threshold)


def chads2_vasc(vector: FeatureVector) -> int:
    return evaluate_score(vector, _cached_definition("chads2_vasc"))


def hatch(vector: FeatureVector) -> int:
    return evaluate_score(vector, _cached_definition("hatch"))


def apple(vector: FeatureVector) -> int:
    return evaluate_score(vector, _cached_definition("apple"))


_DEFINITION_CACHE: dict[str, ScoreDefinition] = {}


def _cached_definition(name: str) -> ScoreDefinition:
    if name not in _DEFINITION_CACHE:
        _DEFINITION_CACHE[name] = bundled_score(name)
    return _DEFINITION_CACHE[name]


# ---------------------------------------------------------------------------
# Mode imputation for score inputs (train-fitted, reused on test)
# ---------------------------------------------------------------------------

def fit_modes(dataset: Dataset, columns: set[str]) -> dict[str, float]:
    """Train-split mode per column; ties break toward the lower value."""
    train_rows = [dataset.rows[i] for i in dataset.split("train")]
    modes = {}
    for name in sorted(columns):
        values = [row.cells[name] for row in train_rows if name in row.cells]
        if not values:
            raise SchemaError(f"column {name!r} has no observed training values to impute from")
        counts = Counter(values)
        best = max(counts.items(), key=lambda kv: (kv[1], -kv[0]))
        modes[name] = best[0]
    return modes


def impute_mode_for_scores(dataset: Dataset,
                           definitions: dict[str, ScoreDefinition] | None = None
                           ) -> tuple[Dataset, dict[str, float]]:
    """Fill every score-referenced column with the train-split mode.

    A referenced column with no observed train value at all has no mode to
    fit; it stays missing and its component scores no points, the same
    convention the eGFR derivation uses for absent creatinine.
    """
    definitions = definitions or bundled_scores()
    columns: set[str] = set()
    for definition in definitions.values():
        columns.update(definition.referenced_columns())
    columns &= set(dataset.schema.names)
    train_rows = [dataset.rows[i] for i in dataset.split("train")]
    observed = {name for row in train_rows for name in row.cells}
    for name in sorted(columns - observed):
        log.warning("score input %r has no observed training values; left missing", name)
    modes = fit_modes(dataset, columns & observed)
    rows = []
    for row in dataset.rows:
        cells = dict(row.cells)
        for name, mode in modes.items():
            cells.setdefault(name, mode)
        rows.append(replace(row, cells=cells))
    return replace(dataset, rows=tuple(rows)), modes


@dataclass(frozen=True)
class PatientScores:
    patient_id: str
    scores: dict       # score name -> integer value
    predictions: dict  # score name -> 0/1 at the score threshold


def score_dataset(dataset: Dataset,
                  definitions: dict[str, ScoreDefinition] | None = None) -> list[PatientScores]:
    """Mode-impute score inputs, then score and classify every row."""
    definitions = definitions or bundled_scores()
    imputed, _ = impute_mode_for_scores(dataset, definitions)
    out = []
    for row in imputed.rows:
        values = {name: evaluate_score(row, d) for name, d in definitions.items()}
        preds = {name: score_classify(values[name], d) for name, d in definitions.items()}
        out.append(PatientScores(patient_id=row.patient_id, scores=values, predictions=preds))
    return out
