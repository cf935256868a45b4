"""Domain types and group-level fairness metrics.

Conventions used throughout the package:

* labels live in {-1, +1},
* a score of exactly 0 predicts +1 (the beneficial class),
* feature vectors already carry a trailing constant-1 intercept entry,
  appended by the I/O layer, so every model is homogeneous in theta.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Mapping

import numpy as np

POSITIVE_RATE = "positive-rate"
TRUE_POSITIVE_RATE = "true-positive-rate"
BENEFIT_MODES = (POSITIVE_RATE, TRUE_POSITIVE_RATE)


class DimensionMismatch(ValueError):
    pass


class MissingGroupModel(KeyError):
    pass


@dataclass(frozen=True)
class Example:
    """One (features, label, group) observation."""

    features: np.ndarray
    label: int
    group: int

    def __post_init__(self):
        if self.label not in (-1, 1):
            raise ValueError(f"label must be -1 or +1, got {self.label}")
        if self.group < 0:
            raise ValueError(f"group id must be non-negative, got {self.group}")


@dataclass(frozen=True)
class Dataset:
    """Immutable sample of (x, y, z) triples stored column-wise.

    X has shape (N, d), y in {-1, +1}, z holds integer group ids in
    [0, group_count). Every group id must appear at least once.
    """

    X: np.ndarray
    y: np.ndarray
    z: np.ndarray
    group_count: int

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=int)
        z = np.asarray(self.z, dtype=int)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "z", z)
        if X.ndim != 2 or X.shape[0] == 0:
            raise ValueError("X must be a non-empty (N, d) matrix")
        if y.shape != (X.shape[0],) or z.shape != (X.shape[0],):
            raise ValueError("y and z must have one entry per row of X")
        if not np.all(np.isin(y, (-1, 1))):
            raise ValueError("labels must be -1 or +1")
        if self.group_count < 1:
            raise ValueError("group_count must be >= 1")
        present = np.unique(z)
        if present.min() < 0 or present.max() >= self.group_count:
            raise ValueError("group ids must lie in [0, group_count)")
        if len(present) != self.group_count:
            raise ValueError("every group id must appear at least once")
        X.setflags(write=False)
        y.setflags(write=False)
        z.setflags(write=False)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def feature_dim(self) -> int:
        return self.X.shape[1]

    def group_mask(self, group: int) -> np.ndarray:
        return self.z == group

    def group_size(self, group: int) -> int:
        return int(np.count_nonzero(self.z == group))

    def group_features(self, group: int) -> np.ndarray:
        return self.X[self.group_mask(group)]

    def subset(self, idx: np.ndarray) -> "Dataset":
        """Row subset; caller must keep every group represented."""
        return Dataset(self.X[idx], self.y[idx], self.z[idx], self.group_count)

    def examples(self) -> Iterator[Example]:
        for i in range(self.n):
            yield Example(self.X[i], int(self.y[i]), int(self.z[i]))

    @staticmethod
    def from_examples(examples, group_count: int | None = None) -> "Dataset":
        examples = list(examples)
        X = np.stack([e.features for e in examples])
        y = np.array([e.label for e in examples])
        z = np.array([e.group for e in examples])
        if group_count is None:
            group_count = int(z.max()) + 1
        return Dataset(X, y, z, group_count)


@dataclass(frozen=True)
class LinearModel:
    """Decision boundary parameters; prediction is sign(theta . x)."""

    theta: np.ndarray

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        if theta.ndim != 1:
            raise ValueError("theta must be a vector")
        if not np.all(np.isfinite(theta)):
            raise ValueError("theta must be finite")
        theta.setflags(write=False)
        object.__setattr__(self, "theta", theta)

    def scores(self, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        if X.shape[1] != self.theta.shape[0]:
            raise DimensionMismatch(
                f"features have dim {X.shape[1]}, model expects {self.theta.shape[0]}"
            )
        return X @ self.theta


def predict(model: LinearModel, features: np.ndarray) -> int:
    """Predicted label for a single feature vector. sign(0) is +1."""
    score = model.scores(np.asarray(features, dtype=float).reshape(1, -1))[0]
    return 1 if score >= 0 else -1


def predict_labels(scores: np.ndarray) -> np.ndarray:
    """Vectorized sign with the score-0 tie broken toward +1."""
    return np.where(scores >= 0, 1, -1)


@dataclass(frozen=True)
class GroupConditionalModel:
    """One linear model per group, or a single model shared by all groups."""

    per_group: Mapping[int, LinearModel] | None = None
    shared: LinearModel | None = None

    def __post_init__(self):
        if (self.per_group is None) == (self.shared is None):
            raise ValueError("provide exactly one of per_group or shared")
        if self.per_group is not None:
            object.__setattr__(self, "per_group", dict(self.per_group))

    @property
    def is_shared(self) -> bool:
        return self.shared is not None

    def model_for(self, group: int) -> LinearModel:
        if self.shared is not None:
            return self.shared
        try:
            return self.per_group[group]
        except KeyError:
            raise MissingGroupModel(f"no model for group {group}") from None

    def decision_values(self, X: np.ndarray, group: int) -> np.ndarray:
        return self.model_for(group).scores(X)

    def groups(self) -> list[int]:
        return sorted(self.per_group) if self.per_group is not None else []


@dataclass(frozen=True)
class BenefitReport:
    """Utility plus the K x K cross-benefit matrix B[i, j] = benefit of
    group i under group j's classifier."""

    utility: float
    benefit_matrix: np.ndarray
    benefit_mode: str = POSITIVE_RATE

    def __post_init__(self):
        B = np.asarray(self.benefit_matrix, dtype=float)
        if B.ndim != 2 or B.shape[0] != B.shape[1]:
            raise ValueError("benefit_matrix must be square")
        if np.any(B < -1e-12) or np.any(B > 1 + 1e-12):
            raise ValueError("benefit entries must lie in [0, 1]")
        if not 0 <= self.utility <= 1:
            raise ValueError("utility must lie in [0, 1]")
        if self.benefit_mode not in BENEFIT_MODES:
            raise ValueError(f"unknown benefit mode {self.benefit_mode!r}")
        B.setflags(write=False)
        object.__setattr__(self, "benefit_matrix", B)

    @property
    def group_count(self) -> int:
        return self.benefit_matrix.shape[0]

    def own_benefits(self) -> np.ndarray:
        return np.diag(self.benefit_matrix)


def utility(model, data: Dataset) -> float:
    """Overall accuracy, each example judged by its own group's classifier.

    `model` is anything with decision_values(X, group): group-conditional
    linear models and kernel models both qualify.
    """
    correct = 0
    for g in range(data.group_count):
        mask = data.group_mask(g)
        preds = predict_labels(model.decision_values(data.X[mask], g))
        correct += int(np.count_nonzero(preds == data.y[mask]))
    return correct / data.n


def group_benefit(
    model: LinearModel, data: Dataset, group: int, mode: str = POSITIVE_RATE
) -> float:
    """Fraction of group members predicted positive, optionally restricted
    to the truly-positive members (true-positive-rate mode)."""
    if mode not in BENEFIT_MODES:
        raise ValueError(f"unknown benefit mode {mode!r}")
    mask = data.group_mask(group)
    if mode == TRUE_POSITIVE_RATE:
        mask = mask & (data.y == 1)
    if not mask.any():
        raise ValueError(f"empty conditioning set for group {group}, mode {mode}")
    preds = predict_labels(model.scores(data.X[mask]))
    return float(np.mean(preds == 1))


def benefit_matrix(model, data: Dataset, mode: str = POSITIVE_RATE) -> BenefitReport:
    """Cross-benefit matrix: entry (i, j) is group i's benefit when judged
    by group j's classifier. A shared model yields identical columns."""
    if mode not in BENEFIT_MODES:
        raise ValueError(f"unknown benefit mode {mode!r}")
    K = data.group_count
    B = np.empty((K, K))
    for i in range(K):
        mask = data.group_mask(i)
        if mode == TRUE_POSITIVE_RATE:
            mask = mask & (data.y == 1)
        if not mask.any():
            raise ValueError(f"empty conditioning set for group {i}, mode {mode}")
        Xi = data.X[mask]
        for j in range(K):
            preds = predict_labels(model.decision_values(Xi, j))
            B[i, j] = float(np.mean(preds == 1))
    return BenefitReport(utility(model, data), B, mode)


@dataclass(frozen=True)
class CheckResult:
    satisfied: bool
    worst_violation: float

    def __bool__(self) -> bool:
        return self.satisfied


def check_preferred_treatment(report: BenefitReport, eps: float = 0.0) -> CheckResult:
    """Group-level envy-freeness: no group gains more than eps by adopting
    another group's classifier."""
    B = report.benefit_matrix
    diag = np.diag(B)
    violation = float(np.max(B - diag[:, None]))
    return CheckResult(violation <= eps, max(violation, 0.0))


def check_preferred_impact(
    report: BenefitReport, baseline: BenefitReport, eps: float = 0.0
) -> CheckResult:
    """Each group's own-classifier benefit dominates the baseline's (the
    impact-parity disagreement point) up to eps."""
    if report.group_count != baseline.group_count:
        raise ValueError("reports cover different group counts")
    if report.benefit_mode != baseline.benefit_mode:
        raise ValueError("reports use different benefit modes")
    gaps = baseline.own_benefits() - report.own_benefits()
    violation = float(np.max(gaps))
    return CheckResult(violation <= eps, max(violation, 0.0))


def check_impact_parity(report: BenefitReport, eps: float = 0.0) -> CheckResult:
    """Own-classifier benefits equal across groups up to eps."""
    if report.group_count < 2:
        raise ValueError("impact parity needs at least two groups")
    diag = report.own_benefits()
    gap = float(diag.max() - diag.min())
    return CheckResult(gap <= eps, gap)
