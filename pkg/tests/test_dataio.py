"""CSV ingestion, balancing, splitting, standardization."""

import numpy as np
import pytest

from preffair.dataio import (
    DatasetSchema,
    FeatureColumn,
    SchemaError,
    balance_classes,
    export_csv,
    load_csv,
    split_train_test,
    split_train_test_stratified,
    standardize_folds,
)

from conftest import make_dataset

TOY_SCHEMA = DatasetSchema(
    feature_columns=(
        FeatureColumn("age", "numeric"),
        FeatureColumn("color", "categorical", ("red", "blue")),
    ),
    label_column="outcome",
    positive_label="good",
    sensitive_column="sex",
    group_values=("female", "male"),
)

TOY_CSV = """age,color,outcome,sex
30,red,good,female
40,blue,bad,male
50,red,good,male
"""


def write(tmp_path, text, name="data.csv"):
    path = tmp_path / name
    path.write_text(text, encoding="utf-8")
    return path


class TestSchema:
    def test_from_dict_roundtrip(self):
        doc = {
            "feature_columns": [
                {"name": "age", "kind": "numeric"},
                {"name": "color", "kind": "categorical",
                 "categories": ["red", "blue"]},
            ],
            "label_column": "outcome",
            "positive_label": "good",
            "sensitive_column": "sex",
            "group_values": ["female", "male"],
        }
        assert DatasetSchema.from_dict(doc) == TOY_SCHEMA

    def test_from_yaml_file(self, tmp_path):
        text = """
feature_columns:
  - {name: age, kind: numeric}
  - {name: color, kind: categorical, categories: [red, blue]}
label_column: outcome
positive_label: good
sensitive_column: sex
group_values: [female, male]
"""
        assert DatasetSchema.from_file(write(tmp_path, text, "s.yaml")) == TOY_SCHEMA

    def test_column_role_reuse_rejected(self):
        with pytest.raises(SchemaError):
            DatasetSchema(
                feature_columns=(FeatureColumn("sex", "numeric"),),
                label_column="outcome",
                positive_label="good",
                sensitive_column="sex",
                group_values=("a", "b"),
            )

    def test_categorical_needs_categories(self):
        with pytest.raises(SchemaError):
            FeatureColumn("c", "categorical")


class TestLoadCsv:
    def test_toy_encoding(self, tmp_path):
        loaded = load_csv(write(tmp_path, TOY_CSV), TOY_SCHEMA)
        data = loaded.dataset
        # d = 1 numeric + 2 one-hot + 1 intercept
        assert data.feature_dim == 4
        assert loaded.column_names == ("age", "color=red", "color=blue",
                                       "intercept")
        np.testing.assert_array_equal(
            data.X,
            [[30.0, 1.0, 0.0, 1.0],
             [40.0, 0.0, 1.0, 1.0],
             [50.0, 1.0, 0.0, 1.0]],
        )
        np.testing.assert_array_equal(data.y, [1, -1, 1])
        np.testing.assert_array_equal(data.z, [0, 1, 1])
        assert loaded.numeric_indices == (0,)
        assert loaded.rejected_rows == 0

    def test_missing_values_dropped_and_counted(self, tmp_path):
        text = TOY_CSV + ",red,good,female\n60,,bad,male\n"
        loaded = load_csv(write(tmp_path, text), TOY_SCHEMA)
        assert loaded.dataset.n == 3
        assert loaded.rejected_rows == 2

    def test_unknown_category_raises(self, tmp_path):
        text = TOY_CSV + "33,green,good,female\n"
        with pytest.raises(SchemaError, match="unknown category"):
            load_csv(write(tmp_path, text), TOY_SCHEMA)

    def test_unparseable_numeric_raises(self, tmp_path):
        text = TOY_CSV + "old,red,good,female\n"
        with pytest.raises(SchemaError, match="unparseable numeric"):
            load_csv(write(tmp_path, text), TOY_SCHEMA)

    def test_missing_column_raises(self, tmp_path):
        with pytest.raises(SchemaError, match="missing schema columns"):
            load_csv(write(tmp_path, "age,outcome,sex\n30,good,female\n"),
                     TOY_SCHEMA)

    def test_unknown_sensitive_value_raises(self, tmp_path):
        text = TOY_CSV + "30,red,good,other\n"
        with pytest.raises(SchemaError, match="unknown sensitive value"):
            load_csv(write(tmp_path, text), TOY_SCHEMA)


class TestExportRoundtrip:
    def test_numeric_representation_idempotent(self, tmp_path):
        rng = np.random.default_rng(0)
        data = make_dataset(rng.normal(size=(20, 2)),
                            rng.choice([-1, 1], 20).tolist(),
                            rng.integers(0, 2, 20).tolist())
        path = tmp_path / "out.csv"
        export_csv(path, data)
        schema = DatasetSchema(
            feature_columns=(FeatureColumn("x0", "numeric"),
                             FeatureColumn("x1", "numeric"),
                             FeatureColumn("intercept", "numeric")),
            label_column="label",
            positive_label="1",
            sensitive_column="group",
            group_values=("0", "1"),
        )
        loaded = load_csv(path, schema)
        # the loader appends its own intercept; drop it for comparison
        np.testing.assert_array_equal(loaded.dataset.X[:, :3], data.X)
        np.testing.assert_array_equal(loaded.dataset.y, data.y)
        np.testing.assert_array_equal(loaded.dataset.z, data.z)


class TestBalanceClasses:
    def _toy(self, pos, neg):
        n = pos + neg
        pts = np.arange(2 * n, dtype=float).reshape(n, 2)
        labels = [1] * pos + [-1] * neg
        groups = [0, 1] * (n // 2) + [0] * (n % 2)
        return make_dataset(pts, labels, groups)

    def test_majority_subsampled(self):
        out = balance_classes(self._toy(10, 4), seed=0)
        assert out.n == 8
        assert np.count_nonzero(out.y == 1) == 4
        assert np.count_nonzero(out.y == -1) == 4

    def test_already_balanced_unchanged(self):
        data = self._toy(5, 5)
        out = balance_classes(data, seed=0)
        assert out.n == data.n
        np.testing.assert_array_equal(out.X, data.X)

    def test_single_class_rejected(self):
        data = make_dataset([[0.0, 0.0], [1.0, 1.0]], [1, 1], [0, 1])
        with pytest.raises(ValueError):
            balance_classes(data)

    def test_deterministic(self):
        data = self._toy(11, 4)
        a = balance_classes(data, seed=3)
        b = balance_classes(data, seed=3)
        np.testing.assert_array_equal(a.X, b.X)


class TestSplit:
    def _data(self, n=100, seed=0):
        rng = np.random.default_rng(seed)
        return make_dataset(rng.normal(size=(n, 2)),
                            rng.choice([-1, 1], n).tolist(),
                            rng.integers(0, 2, n).tolist())

    def test_sizes(self):
        train, test = split_train_test(self._data(100), 0.7, seed=0)
        assert train.n == 70
        assert test.n == 30

    def test_floor_rounding(self):
        train, test = split_train_test(self._data(101), 0.7, seed=0)
        assert train.n == 70
        assert test.n == 31

    def test_same_seed_identical(self):
        data = self._data()
        a = split_train_test(data, 0.7, seed=9)
        b = split_train_test(data, 0.7, seed=9)
        np.testing.assert_array_equal(a[0].X, b[0].X)
        np.testing.assert_array_equal(a[1].X, b[1].X)

    def test_disjoint_union(self):
        data = self._data(60)
        train, test = split_train_test(data, 0.7, seed=1)
        merged = np.vstack([train.X, test.X])
        assert merged.shape[0] == data.n
        assert {tuple(r) for r in merged} == {tuple(r) for r in data.X}

    def test_groups_present_in_both_folds(self):
        # group 1 has only 3 members out of 30; retries must keep it in both
        pts = np.random.default_rng(0).normal(size=(30, 2))
        groups = [0] * 27 + [1] * 3
        labels = ([1, -1] * 15)
        data = make_dataset(pts, labels, groups)
        for seed in range(10):
            train, test = split_train_test(data, 0.7, seed=seed)
            assert set(np.unique(train.z)) == {0, 1}
            assert set(np.unique(test.z)) == {0, 1}

    def test_invalid_fraction(self):
        with pytest.raises(ValueError):
            split_train_test(self._data(), 0.0)
        with pytest.raises(ValueError):
            split_train_test(self._data(), 1.0)

    def test_stratified_preserves_cells(self):
        data = self._data(200, seed=4)
        train, test = split_train_test_stratified(data, 0.7, seed=0)
        for g in (0, 1):
            for label in (-1, 1):
                total = np.count_nonzero((data.z == g) & (data.y == label))
                got = np.count_nonzero((train.z == g) & (train.y == label))
                assert got == int(total * 0.7)


class TestStandardize:
    def test_train_stats_only(self):
        rng = np.random.default_rng(0)
        train = make_dataset(rng.normal(5.0, 2.0, (50, 2)),
                             rng.choice([-1, 1], 50).tolist(),
                             rng.integers(0, 2, 50).tolist())
        test = make_dataset(rng.normal(9.0, 1.0, (20, 2)),
                            rng.choice([-1, 1], 20).tolist(),
                            rng.integers(0, 2, 20).tolist())
        tr, te = standardize_folds(train, test, (0, 1))
        np.testing.assert_allclose(tr.X[:, :2].mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(tr.X[:, :2].std(axis=0), 1.0, atol=1e-12)
        # test fold transformed with TRAIN statistics, so not centered
        assert np.all(te.X[:, :2].mean(axis=0) > 1.0)
        # intercept column untouched
        np.testing.assert_array_equal(tr.X[:, 2], 1.0)

    def test_constant_column_safe(self):
        data = make_dataset([[3.0, 1.0], [3.0, 2.0]], [1, -1], [0, 1])
        tr, te = standardize_folds(data, data, (0,))
        assert np.all(np.isfinite(tr.X))

    def test_noop_without_numeric_indices(self):
        data = make_dataset([[3.0, 1.0], [4.0, 2.0]], [1, -1], [0, 1])
        tr, te = standardize_folds(data, data, ())
        assert tr is data and te is data
