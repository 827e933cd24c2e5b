import math
from datetime import date

import numpy as np
import pytest

from afrec.data_model import Dataset, FeatureVector, SchemaError
from afrec.preprocessing import (
    FittedPreprocessing,
    impute_median,
    observed_columns,
    lasso_fit,
    lsfm_select,
    matrix_of,
    rfe_select,
    row_missing_fractions,
    standardize,
    undersample,
)


def make_dataset(schema, rows_cells, labels=None, tags=None):
    n = len(rows_cells)
    rows = tuple(
        FeatureVector(f"P{i}", date(2020, 1, 1), cells)
        for i, cells in enumerate(rows_cells)
    )
    return Dataset(
        schema=schema,
        rows=rows,
        labels=tuple(labels if labels is not None else [0] * n),
        split_tags=tuple(tags if tags is not None else ["train"] * n),
    )


def planted(seed, n=240, d=86, informative=(5, 40, 77)):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    logits = sum(3.0 * X[:, j] for j in informative)
    y = (logits > 0).astype(float)
    return X, y


class TestImputeMedian:
    def test_odd_count_median(self, schema):
        dataset = make_dataset(schema, [{"urea": 1.0}, {"urea": 3.0}, {}])
        imputed, fitted = impute_median(dataset, ["urea"])
        assert fitted["urea"] == 2.0
        assert imputed.rows[2].cells["urea"] == 2.0

    def test_even_count_mean_of_middle(self, schema):
        dataset = make_dataset(schema, [{"urea": 1.0}, {"urea": 3.0}])
        _, fitted = impute_median(dataset, ["urea"])
        assert fitted["urea"] == 2.0

    def test_no_missing_identity(self, schema):
        cells = [{"urea": 5.0}, {"urea": 7.0}]
        dataset = make_dataset(schema, cells)
        imputed, _ = impute_median(dataset, ["urea"])
        assert [r.cells["urea"] for r in imputed.rows] == [5.0, 7.0]

    def test_binary_mode_fill(self, schema):
        dataset = make_dataset(schema, [{"heart_failure": 1.0},
                                        {"heart_failure": 1.0},
                                        {"heart_failure": 0.0}, {}])
        imputed, fitted = impute_median(dataset, ["heart_failure"])
        assert fitted["heart_failure"] == 1.0
        assert imputed.rows[3].cells["heart_failure"] == 1.0

    def test_fit_on_train_only(self, schema):
        dataset = make_dataset(schema, [{"urea": 1.0}, {"urea": 100.0}],
                               tags=["train", "test"])
        _, fitted = impute_median(dataset, ["urea"])
        assert fitted["urea"] == 1.0

    def test_all_missing_column_errors(self, schema):
        with pytest.raises(SchemaError, match="no observed training values"):
            impute_median(make_dataset(schema, [{"urea": 1.0}, {}]), ["urea", "age"])
        # Default imputes every schema column, so sparse data also errors.
        with pytest.raises(SchemaError, match="no observed training values"):
            impute_median(make_dataset(schema, [{"urea": 1.0}, {}]))

    def test_observed_columns_helper(self, schema):
        dataset = make_dataset(schema, [{"urea": 1.0}, {"age": 70.0}],
                               tags=["train", "test"])
        assert observed_columns(dataset) == ["urea"]

    def test_idempotent(self, schema):
        dataset = make_dataset(schema, [{"urea": 1.0}, {"urea": 3.0}, {}])
        once, fitted = impute_median(dataset, ["urea"])
        twice, fitted2 = impute_median(once, ["urea"])
        assert [r.cells for r in once.rows] == [r.cells for r in twice.rows]
        assert fitted == fitted2


class TestStandardize:
    def test_population_sd(self, schema):
        dataset = make_dataset(schema, [{"urea": 1.0}, {"urea": 2.0}, {"urea": 3.0}])
        scaled, fitted = standardize(dataset)
        values = [r.cells["urea"] for r in scaled.rows]
        assert values == pytest.approx([-1.224744871391589, 0.0, 1.224744871391589])
        assert fitted["urea"] == (2.0, pytest.approx(math.sqrt(2.0 / 3.0)))

    def test_constant_column_maps_to_zero(self, schema):
        dataset = make_dataset(schema, [{"urea": 5.0}, {"urea": 5.0}])
        scaled, _ = standardize(dataset)
        assert [r.cells["urea"] for r in scaled.rows] == [0.0, 0.0]

    def test_test_value_equal_to_train_mean_maps_to_zero(self, schema):
        dataset = make_dataset(schema, [{"urea": 1.0}, {"urea": 3.0}, {"urea": 2.0}],
                               tags=["train", "train", "test"])
        scaled, _ = standardize(dataset)
        assert scaled.rows[2].cells["urea"] == 0.0

    def test_binary_and_categorical_untouched(self, schema):
        dataset = make_dataset(schema, [{"heart_failure": 1.0, "af_type": 2.0},
                                        {"heart_failure": 0.0, "af_type": 1.0}])
        scaled, fitted = standardize(dataset)
        assert scaled.rows[0].cells["heart_failure"] == 1.0
        assert scaled.rows[0].cells["af_type"] == 2.0
        assert "heart_failure" not in fitted

    def test_restandardizing_train_refits_to_zero_one(self, schema):
        dataset = make_dataset(schema, [{"urea": float(v)} for v in (1, 5, 9, 13)])
        scaled, _ = standardize(dataset)
        rescaled, fitted = standardize(scaled)
        assert fitted["urea"][0] == pytest.approx(0.0, abs=1e-12)
        assert fitted["urea"][1] == pytest.approx(1.0)
        for a, b in zip(scaled.rows, rescaled.rows):
            assert a.cells["urea"] == pytest.approx(b.cells["urea"])


class TestRFE:
    def test_recovers_planted_signal(self):
        X, y = planted(0)
        names = [f"c{i:02d}" for i in range(86)]
        selected = rfe_select(X, y, names, target_count=3, step=8,
                              params={"epochs": 60, "batch_size": 64}, seed=0)
        assert set(selected) == {"c05", "c40", "c77"}

    def test_target_equals_total_is_identity(self):
        X, y = planted(1, n=60, d=10, informative=(0,))
        names = [f"c{i}" for i in range(10)]
        assert rfe_select(X, y, names, target_count=10) == names

    def test_target_too_large_errors(self):
        X, y = planted(1, n=40, d=5, informative=(0,))
        with pytest.raises(SchemaError):
            rfe_select(X, y, [f"c{i}" for i in range(5)], target_count=6)

    def test_tie_drops_later_column(self, monkeypatch):
        # Duplicate a column so its coefficients tie; the later copy must go.
        rng = np.random.default_rng(3)
        base = rng.normal(size=(120, 1))
        noise = rng.normal(size=(120, 1))
        X = np.hstack([base, base, noise * 1e-9])
        y = (base[:, 0] > 0).astype(float)
        import afrec.preprocessing as prep

        class FakeModel:
            weights = np.array([0.5, 0.5, 0.5])

        monkeypatch.setattr(prep.models, "fit", lambda *a, **k: FakeModel())
        selected = prep.rfe_select(X, y, ["a", "b", "c"], target_count=2, step=1)
        assert selected == ["a", "b"]

    def test_deterministic_under_seed(self):
        X, y = planted(4, n=80, d=12, informative=(2, 7))
        names = [f"c{i}" for i in range(12)]
        first = rfe_select(X, y, names, 4, step=2, seed=9,
                           params={"epochs": 30})
        second = rfe_select(X, y, names, 4, step=2, seed=9,
                            params={"epochs": 30})
        assert first == second


class TestLSFM:
    def test_keep_count_is_ceil(self):
        X, y = planted(5)
        names = [f"c{i:02d}" for i in range(86)]
        selected = lsfm_select(X, y, names, keep_fraction=0.25, seed=0)
        assert len(selected) == 22  # ceil(0.25 * 86)

    def test_planted_columns_survive(self):
        X, y = planted(6)
        names = [f"c{i:02d}" for i in range(86)]
        selected = lsfm_select(X, y, names, keep_fraction=0.25, seed=0)
        assert {"c05", "c40", "c77"} <= set(selected)

    def test_keep_fraction_one_is_identity(self):
        X, y = planted(7, n=60, d=8, informative=(1,))
        names = [f"c{i}" for i in range(8)]
        assert lsfm_select(X, y, names, keep_fraction=1.0) == names

    def test_all_zero_coefficients_fall_back(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(40, 8))
        y = np.array([0.0, 1.0] * 20)
        names = [f"c{i}" for i in range(8)]
        selected = lsfm_select(X, y, names, keep_fraction=0.25, seed=0,
                               grid=(1e6,))  # absurd penalty zeroes everything
        assert selected == names[:2]

    def test_lasso_shrinks_noise_to_zero(self):
        rng = np.random.default_rng(9)
        X = rng.normal(size=(200, 5))
        y = 2.0 * X[:, 0] + 0.01 * rng.normal(size=200)
        w, b = lasso_fit(X, y, lam=0.1)
        assert abs(w[0]) > 1.0
        assert np.all(np.abs(w[1:]) < 0.05)


class TestUndersample:
    def test_balances_by_missingness(self, schema):
        rows = []
        labels = []
        # 7 positives with increasing missingness (more cells = less missing).
        for i in range(7):
            cells = {"urea": 1.0}
            for extra in list(schema.names)[8:8 + i]:
                column = schema.column(extra)
                cells[extra] = 0.0 if column.kind.value != "numeric" else 1.0
            rows.append(cells)
            labels.append(1)
        for _ in range(3):
            rows.append({"urea": 1.0})
            labels.append(0)
        dataset = make_dataset(schema, rows, labels=labels)
        missingness = row_missing_fractions(dataset)
        balanced = undersample(dataset, missingness)
        assert sum(balanced.labels) == 3 and len(balanced.labels) == 6
        # The positives with the most missing cells (fewest filled) are gone.
        kept_pos = [r.patient_id for r, lab in zip(balanced.rows, balanced.labels)
                    if lab == 1]
        assert kept_pos == ["P4", "P5", "P6"]

    def test_already_balanced_identity(self, schema):
        dataset = make_dataset(schema, [{"urea": 1.0}, {}], labels=[1, 0])
        balanced = undersample(dataset, row_missing_fractions(dataset))
        assert balanced == dataset

    def test_tie_removes_later_row(self, schema):
        dataset = make_dataset(schema, [{}, {}, {}], labels=[1, 1, 0])
        balanced = undersample(dataset, row_missing_fractions(dataset))
        assert [r.patient_id for r in balanced.rows] == ["P0", "P2"]

    def test_empty_minority_errors(self, schema):
        dataset = make_dataset(schema, [{}, {}], labels=[1, 1])
        with pytest.raises(SchemaError, match="one class is empty"):
            undersample(dataset, row_missing_fractions(dataset))


def test_fitted_pipeline_round_trip(tmp_path, schema):
    dataset = make_dataset(schema, [{"urea": 1.0, "heart_failure": 1.0},
                                    {"urea": 3.0, "heart_failure": 0.0}, {}],
                           tags=["train", "train", "test"])
    imputed, imputation = impute_median(dataset, ["urea", "heart_failure"])
    scaled, scaling = standardize(imputed)
    fitted = FittedPreprocessing(imputation=imputation, scaling=scaling,
                                 selected_columns=["urea", "heart_failure"],
                                 fs_method="rfe")
    fitted.save(tmp_path / "prep.json")
    loaded = FittedPreprocessing.load(tmp_path / "prep.json")
    assert loaded.imputation == fitted.imputation
    assert loaded.scaling == fitted.scaling
    assert loaded.selected_columns == fitted.selected_columns
    redone = loaded.apply(dataset)
    for a, b in zip(redone.rows, scaled.rows):
        assert a.cells == b.cells


def test_matrix_of_uses_nan_for_missing(schema):
    dataset = make_dataset(schema, [{"urea": 1.0}, {}])
    X = matrix_of(dataset, ["urea", "creatinine"])
    assert X[0, 0] == 1.0
    assert np.isnan(X[0, 1]) and np.isnan(X[1, 0])
