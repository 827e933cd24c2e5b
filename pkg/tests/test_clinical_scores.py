from datetime import date

import numpy as np
import pytest

from afrec.clinical_scores import (
    apple,
    bundled_score,
    bundled_scores,
    chads2_vasc,
    egfr_from,
    fit_modes,
    hatch,
    impute_mode_for_scores,
    score_classify,
    score_dataset,
)
from afrec.data_model import Dataset, FeatureVector, SchemaError


def vec(cells):
    return FeatureVector("P1", date(2020, 1, 1), cells)


# Independent brute-force component sums (the oracle; kept deliberately
# separate from the data-driven ScoreDefinition path).

def brute_chads(cells):
    get = cells.get
    points = 0
    points += 1 if get("heart_failure") == 1 else 0
    points += 1 if get("hypertension") == 1 else 0
    age = get("age")
    if age is not None and age >= 75:
        points += 2
    elif age is not None and 65 <= age < 75:
        points += 1
    points += 1 if (get("diabetes_type1") == 1 or get("diabetes_type2") == 1) else 0
    points += 2 if get("stroke") == 1 else 0
    points += 1 if (get("ischemic_cardiomyopathy") == 1
                    or get("peripheral_arteriopathy") == 1) else 0
    points += 1 if get("gender") == 1 else 0
    return points


def brute_hatch(cells):
    get = cells.get
    points = 0
    points += 1 if get("hypertension") == 1 else 0
    age = get("age")
    points += 1 if age is not None and age > 75 else 0
    points += 2 if get("stroke") == 1 else 0
    points += 1 if get("copd") == 1 else 0
    points += 2 if get("heart_failure") == 1 else 0
    return points


def brute_egfr(cells):
    creatinine, age = cells.get("creatinine"), cells.get("age")
    if creatinine is None or age is None or creatinine <= 0:
        return None
    ratio = creatinine / 0.9
    return 141.0 * min(ratio, 1.0) ** -0.411 * max(ratio, 1.0) ** -1.209 * 0.993 ** age


def brute_apple(cells):
    get = cells.get
    points = 0
    age = get("age")
    points += 1 if age is not None and age > 65 else 0
    points += 1 if get("af_type") in (2, 3) else 0
    egfr = brute_egfr(cells)
    points += 1 if egfr is not None and egfr < 60 else 0
    la = get("la_diameter")
    points += 1 if la is not None and la >= 43 else 0
    lvef = get("lvef")
    points += 1 if lvef is not None and lvef < 50 else 0
    return points


def random_cells(rng):
    cells = {
        "gender": float(rng.integers(0, 2)),
        "age": float(rng.integers(18, 104)),
        "af_type": float(rng.integers(0, 4)),
    }
    for name in ("heart_failure", "hypertension", "diabetes_type1", "diabetes_type2",
                 "stroke", "ischemic_cardiomyopathy", "peripheral_arteriopathy", "copd"):
        if rng.random() < 0.8:
            cells[name] = float(rng.integers(0, 2))
    if rng.random() < 0.8:
        cells["creatinine"] = float(np.round(rng.uniform(0.2, 9.0), 2))
    if rng.random() < 0.7:
        cells["la_diameter"] = float(rng.integers(20, 70))
    if rng.random() < 0.7:
        cells["lvef"] = float(rng.integers(15, 75))
    return cells


def test_chads_examples():
    assert chads2_vasc(vec({"gender": 0.0, "age": 40.0})) == 0
    assert chads2_vasc(vec({"gender": 1.0, "age": 76.0, "hypertension": 1.0})) == 4
    definition = bundled_score("chads2_vasc")
    assert score_classify(2, definition) == 1
    assert score_classify(1, definition) == 0


def test_hatch_examples():
    assert hatch(vec({"age": 80.0, "copd": 1.0})) == 2
    assert hatch(vec({"heart_failure": 1.0, "stroke": 1.0})) == 4
    assert hatch(vec({"age": 40.0})) == 0
    definition = bundled_score("hatch")
    assert score_classify(hatch(vec({"age": 80.0, "copd": 1.0})), definition) == 1
    assert score_classify(0, definition) == 0
    # age > 75 is strict: 75 exactly scores nothing.
    assert hatch(vec({"age": 75.0})) == 0


def test_apple_examples():
    assert apple(vec({"age": 70.0, "lvef": 45.0, "la_diameter": 45.0})) == 3
    assert apple(vec({"age": 50.0, "af_type": 1.0, "lvef": 60.0,
                      "la_diameter": 35.0, "creatinine": 0.8})) == 0
    definition = bundled_score("apple")
    assert score_classify(2, definition) == 1


def test_scores_match_brute_force_on_random_vectors():
    rng = np.random.default_rng(1234)
    for _ in range(2000):
        cells = random_cells(rng)
        v = vec(cells)
        assert chads2_vasc(v) == brute_chads(cells)
        assert hatch(v) == brute_hatch(cells)
        assert apple(v) == brute_apple(cells)


def test_score_ranges():
    rng = np.random.default_rng(7)
    for _ in range(500):
        v = vec(random_cells(rng))
        assert 0 <= chads2_vasc(v) <= 9
        assert 0 <= hatch(v) <= 7
        assert 0 <= apple(v) <= 5


def test_monotonicity():
    base = {"gender": 0.0, "age": 50.0}
    v0 = vec(dict(base))
    for column in ("heart_failure", "hypertension", "stroke", "copd",
                   "diabetes_type2", "ischemic_cardiomyopathy"):
        cells = dict(base)
        cells[column] = 1.0
        v1 = vec(cells)
        assert chads2_vasc(v1) >= chads2_vasc(v0)
        assert hatch(v1) >= hatch(v0)
        assert apple(v1) >= apple(v0)


def test_gender_flip_changes_only_chads():
    rng = np.random.default_rng(99)
    for _ in range(300):
        cells = random_cells(rng)
        flipped = dict(cells)
        flipped["gender"] = 1.0 - cells["gender"]
        v0, v1 = vec(cells), vec(flipped)
        assert hatch(v0) == hatch(v1)
        assert apple(v0) == apple(v1)
        assert abs(chads2_vasc(v0) - chads2_vasc(v1)) == 1


def test_score_definition_validation():
    from afrec.clinical_scores import Predicate, ScoreComponent, ScoreDefinition
    from afrec.data_model import CorpusError
    with pytest.raises(CorpusError, match="points"):
        ScoreComponent(label="x", points=0,
                       when=Predicate({"column": "age", "op": "gt", "value": 1}))
    with pytest.raises(CorpusError, match="threshold"):
        ScoreDefinition(name="x", threshold=-1, components=())


def test_egfr_derived_feature():
    # Low creatinine, young: high eGFR; high creatinine, old: low eGFR.
    assert egfr_from(vec({"creatinine": 0.7, "age": 30.0})) > 90
    assert egfr_from(vec({"creatinine": 3.0, "age": 80.0})) < 30
    assert egfr_from(vec({"age": 80.0})) is None


def make_dataset(schema, rows_cells, labels, tags):
    rows = tuple(
        FeatureVector(f"P{i}", date(2020, 1, 1 + i), cells)
        for i, cells in enumerate(rows_cells)
    )
    return Dataset(schema=schema, rows=rows, labels=tuple(labels), split_tags=tuple(tags))


def test_mode_imputation_binary(schema):
    rows = [{"heart_failure": 1.0}, {"heart_failure": 1.0},
            {"heart_failure": 0.0}, {}]
    dataset = make_dataset(schema, rows, [0, 1, 0, 1],
                           ["train", "train", "train", "train"])
    modes = fit_modes(dataset, {"heart_failure"})
    assert modes == {"heart_failure": 1.0}


def test_mode_tie_breaks_low(schema):
    rows = [{"heart_failure": 1.0}, {"heart_failure": 0.0}, {}]
    dataset = make_dataset(schema, rows, [0, 1, 0], ["train"] * 3)
    assert fit_modes(dataset, {"heart_failure"}) == {"heart_failure": 0.0}


def test_mode_fitted_on_train_only(schema):
    rows = [{"heart_failure": 0.0}, {"heart_failure": 1.0},
            {"heart_failure": 1.0}, {}]
    dataset = make_dataset(schema, rows, [0, 1, 0, 1],
                           ["train", "test", "test", "test"])
    assert fit_modes(dataset, {"heart_failure"}) == {"heart_failure": 0.0}


def test_impute_mode_fills_all_score_columns(schema):
    rows = [{"age": 70.0, "gender": 1.0, "heart_failure": 1.0, "creatinine": 1.0,
             "hypertension": 0.0, "diabetes_type2": 1.0, "stroke": 0.0, "copd": 0.0,
             "diabetes_type1": 0.0, "ischemic_cardiomyopathy": 0.0,
             "peripheral_arteriopathy": 0.0, "af_type": 0.0, "la_diameter": 40.0,
             "lvef": 55.0},
            {"age": 80.0}]
    dataset = make_dataset(schema, rows, [1, 0], ["train", "test"])
    imputed, modes = impute_mode_for_scores(dataset)
    columns = set().union(*(d.referenced_columns() for d in bundled_scores().values()))
    columns &= set(schema.names)
    for row in imputed.rows:
        for column in columns:
            assert column in row.cells
    assert "creatinine" in modes


def test_all_missing_column_errors(schema):
    dataset = make_dataset(schema, [{"age": 70.0}], [1], ["train"])
    with pytest.raises(SchemaError, match="creatinine"):
        fit_modes(dataset, {"age", "creatinine"})


def test_unobserved_score_inputs_stay_missing(schema):
    dataset = make_dataset(schema, [{"age": 70.0}], [1], ["train"])
    imputed, modes = impute_mode_for_scores(dataset)
    assert modes == {"age": 70.0}
    assert "la_diameter" not in imputed.rows[0].cells
    # The unscoreable component simply contributes nothing.
    assert apple(imputed.rows[0]) == 1  # age > 65 only


def test_score_dataset_end_to_end(schema):
    rows = [{"age": 76.0, "gender": 1.0, "hypertension": 1.0, "heart_failure": 0.0,
             "creatinine": 1.0, "diabetes_type1": 0.0, "diabetes_type2": 0.0,
             "stroke": 0.0, "copd": 0.0, "ischemic_cardiomyopathy": 0.0,
             "peripheral_arteriopathy": 0.0, "af_type": 0.0,
             "la_diameter": 40.0, "lvef": 55.0}]
    dataset = make_dataset(schema, rows, [1], ["train"])
    [result] = score_dataset(dataset)
    assert result.scores["chads2_vasc"] == 4
    assert result.predictions["chads2_vasc"] == 1
