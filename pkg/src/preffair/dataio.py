"""CSV ingestion, class balancing, and train/test splitting.

A declarative schema names the feature columns (numeric or categorical),
the label column with its positive value, and the sensitive column with
its ordered group values. Loading one-hot encodes categoricals in the
schema's declared category order, keeps numerics raw, and appends a
constant-1 intercept column last. Standardization of the numeric columns
happens per split (training-fold statistics only) via standardize_folds.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .core import Dataset

NUMERIC = "numeric"
CATEGORICAL = "categorical"


class SchemaError(ValueError):
    pass


@dataclass(frozen=True)
class FeatureColumn:
    name: str
    kind: str
    categories: tuple[str, ...] = ()

    def __post_init__(self):
        if self.kind not in (NUMERIC, CATEGORICAL):
            raise SchemaError(f"unknown column kind {self.kind!r}")
        if self.kind == CATEGORICAL and not self.categories:
            raise SchemaError(f"categorical column {self.name!r} needs categories")


@dataclass(frozen=True)
class DatasetSchema:
    feature_columns: tuple[FeatureColumn, ...]
    label_column: str
    positive_label: str
    sensitive_column: str
    group_values: tuple[str, ...]

    def __post_init__(self):
        roles = [c.name for c in self.feature_columns]
        roles += [self.label_column, self.sensitive_column]
        if len(set(roles)) != len(roles):
            raise SchemaError("a column may not serve more than one role")
        if len(self.group_values) < 1:
            raise SchemaError("at least one sensitive group value required")

    @property
    def group_count(self) -> int:
        return len(self.group_values)

    @staticmethod
    def from_dict(doc: dict) -> "DatasetSchema":
        features = []
        for col in doc["feature_columns"]:
            features.append(
                FeatureColumn(
                    name=col["name"],
                    kind=col["kind"],
                    categories=tuple(str(c) for c in col.get("categories", ())),
                )
            )
        return DatasetSchema(
            feature_columns=tuple(features),
            label_column=doc["label_column"],
            positive_label=str(doc["positive_label"]),
            sensitive_column=doc["sensitive_column"],
            group_values=tuple(str(v) for v in doc["group_values"]),
        )

    @staticmethod
    def from_file(path) -> "DatasetSchema":
        with open(path, "r", encoding="utf-8") as fh:
            return DatasetSchema.from_dict(yaml.safe_load(fh))


@dataclass(frozen=True)
class LoadedData:
    """Dataset plus the column bookkeeping needed for standardization."""

    dataset: Dataset
    numeric_indices: tuple[int, ...]
    column_names: tuple[str, ...]
    rejected_rows: int


def load_csv(path, schema: DatasetSchema) -> LoadedData:
    """Read a UTF-8, comma-separated, headered CSV into a Dataset.

    Rows with missing values are dropped (counted in rejected_rows);
    unknown categories and unparseable numerics raise.
    """
    path = Path(path)
    rows_X: list[list[float]] = []
    rows_y: list[int] = []
    rows_z: list[int] = []
    rejected = 0

    names: list[str] = []
    numeric_idx: list[int] = []
    col = 0
    for fc in schema.feature_columns:
        if fc.kind == NUMERIC:
            names.append(fc.name)
            numeric_idx.append(col)
            col += 1
        else:
            for cat in fc.categories:
                names.append(f"{fc.name}={cat}")
                col += 1
    names.append("intercept")

    group_index = {v: i for i, v in enumerate(schema.group_values)}

    with open(path, "r", encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        needed = [c.name for c in schema.feature_columns]
        needed += [schema.label_column, schema.sensitive_column]
        missing = [c for c in needed if c not in header]
        if missing:
            raise SchemaError(f"CSV is missing schema columns: {missing}")
        for lineno, row in enumerate(reader, start=2):
            raw = {c: (row.get(c) or "").strip() for c in needed}
            if any(v == "" for v in raw.values()):
                rejected += 1
                continue
            features: list[float] = []
            try:
                for fc in schema.feature_columns:
                    value = raw[fc.name]
                    if fc.kind == NUMERIC:
                        features.append(float(value))
                    else:
                        if value not in fc.categories:
                            raise SchemaError(
                                f"line {lineno}: unknown category {value!r} "
                                f"for column {fc.name!r}"
                            )
                        features.extend(
                            1.0 if value == cat else 0.0 for cat in fc.categories
                        )
            except ValueError as exc:
                if isinstance(exc, SchemaError):
                    raise
                raise SchemaError(
                    f"line {lineno}: unparseable numeric in column"
                ) from exc
            features.append(1.0)  # intercept, always last
            sens = raw[schema.sensitive_column]
            if sens not in group_index:
                raise SchemaError(
                    f"line {lineno}: unknown sensitive value {sens!r}"
                )
            rows_X.append(features)
            rows_y.append(1 if raw[schema.label_column] == schema.positive_label else -1)
            rows_z.append(group_index[sens])

    if not rows_X:
        raise SchemaError(f"no usable rows in {path}")
    dataset = Dataset(
        np.array(rows_X), np.array(rows_y), np.array(rows_z), schema.group_count
    )
    return LoadedData(dataset, tuple(numeric_idx), tuple(names), rejected)


def export_csv(path, data: Dataset, column_names=None) -> None:
    """Write a Dataset back out in the load_csv numeric representation
    (intercept column included, label/group as trailing columns)."""
    d = data.feature_dim
    if column_names is None:
        column_names = [f"x{i}" for i in range(d - 1)] + ["intercept"]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(list(column_names) + ["label", "group"])
        for i in range(data.n):
            writer.writerow(
                [repr(float(v)) for v in data.X[i]]
                + [int(data.y[i]), int(data.z[i])]
            )


def balance_classes(data: Dataset, seed: int = 0) -> Dataset:
    """Subsample the majority class, uniformly without replacement, down
    to the minority class size."""
    pos = np.flatnonzero(data.y == 1)
    neg = np.flatnonzero(data.y == -1)
    if len(pos) == 0 or len(neg) == 0:
        raise ValueError("both classes must be present to balance")
    if len(pos) == len(neg):
        return data
    rng = np.random.default_rng(seed)
    if len(pos) > len(neg):
        pos = np.sort(rng.choice(pos, size=len(neg), replace=False))
    else:
        neg = np.sort(rng.choice(neg, size=len(pos), replace=False))
    idx = np.sort(np.concatenate([pos, neg]))
    return data.subset(idx)


def split_train_test(
    data: Dataset, train_fraction: float = 0.7, seed: int = 0, max_retries: int = 20
) -> tuple[Dataset, Dataset]:
    """Uniform unstratified split; train size is floor(N * fraction).

    If some group vanishes from the training fold, the split is redrawn
    with a derived seed, up to max_retries times.
    """
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    n_train = int(data.n * train_fraction)
    if n_train < 1 or n_train >= data.n:
        raise ValueError("both folds must be nonempty")
    for attempt in range(max_retries + 1):
        rng = np.random.default_rng(np.random.SeedSequence((seed, attempt)))
        perm = rng.permutation(data.n)
        train_idx = np.sort(perm[:n_train])
        test_idx = np.sort(perm[n_train:])
        train_groups = set(np.unique(data.z[train_idx]))
        test_groups = set(np.unique(data.z[test_idx]))
        if len(train_groups) == data.group_count and len(test_groups) == data.group_count:
            return data.subset(train_idx), data.subset(test_idx)
    raise ValueError(
        f"could not produce a split with every group in both folds "
        f"after {max_retries} retries"
    )


def split_train_test_stratified(
    data: Dataset, train_fraction: float = 0.7, seed: int = 0
) -> tuple[Dataset, Dataset]:
    """Per-(group, label) stratified variant, behind a flag in the CLI."""
    if not 0 < train_fraction < 1:
        raise ValueError("train_fraction must lie in (0, 1)")
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for g in range(data.group_count):
        for label in (-1, 1):
            idx = np.flatnonzero((data.z == g) & (data.y == label))
            if idx.size == 0:
                continue
            perm = rng.permutation(idx)
            k = int(len(idx) * train_fraction)
            train_parts.append(perm[:k])
            test_parts.append(perm[k:])
    train_idx = np.sort(np.concatenate(train_parts))
    test_idx = np.sort(np.concatenate(test_parts))
    if train_idx.size == 0 or test_idx.size == 0:
        raise ValueError("both folds must be nonempty")
    return data.subset(train_idx), data.subset(test_idx)


def standardize_folds(
    train: Dataset, test: Dataset, numeric_indices
) -> tuple[Dataset, Dataset]:
    """Zero-mean/unit-variance scaling of the numeric columns, with the
    statistics computed on the training fold only (no leakage)."""
    idx = list(numeric_indices)
    if not idx:
        return train, test
    mean = train.X[:, idx].mean(axis=0)
    std = train.X[:, idx].std(axis=0)
    std[std == 0] = 1.0

    def apply(ds: Dataset) -> Dataset:
        X = ds.X.copy()
        X[:, idx] = (X[:, idx] - mean) / std
        return Dataset(X, ds.y, ds.z, ds.group_count)

    return apply(train), apply(test)
