"""Regularization-weight selection on a held-out validation fold.

Single-model variants pick the lambda with the best validation accuracy.
Constrained variants sweep all |grid|^K combinations of per-group
lambdas and keep the best-accuracy combination whose validation-fold
benefit constraints are admissible under a tolerance rule: the observed
and required benefit counts as satisfied when the observed dominates, or
the two are within 90% of each other, or they differ by at most 0.03.
The OR combination of the two tolerance clauses is the default; AND is
available behind a flag (it makes the 0.03 clause binding everywhere).
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .core import Dataset, utility
from .dataio import split_train_test

DEFAULT_GRID = (1e-4, 1e-3, 1e-2, 1e-1, 1.0)


class SelectionError(RuntimeError):
    pass


@dataclass(frozen=True)
class SelectionConfig:
    lambda_grid: tuple[float, ...] = DEFAULT_GRID
    inner_split: float = 0.7
    relative_tolerance: float = 0.90
    absolute_tolerance: float = 0.03
    tolerance_mode: str = "or"
    seed: int = 0

    def __post_init__(self):
        if not self.lambda_grid:
            raise ValueError("lambda grid must be nonempty")
        if not 0 < self.inner_split < 1:
            raise ValueError("inner_split must lie in (0, 1)")
        if self.tolerance_mode not in ("or", "and"):
            raise ValueError("tolerance_mode must be 'or' or 'and'")


def constraint_satisfied(observed: float, required: float,
                         config: SelectionConfig) -> bool:
    """Is an observed benefit admissible against its required target?"""
    if observed >= required:
        return True
    hi = max(observed, required)
    within_ratio = hi == 0 or min(observed, required) / hi >= config.relative_tolerance
    within_abs = abs(observed - required) <= config.absolute_tolerance
    if config.tolerance_mode == "and":
        return within_ratio and within_abs
    return within_ratio or within_abs


def select_lambda_single(
    data_train: Dataset,
    trainer: Callable[[Dataset, float], object],
    config: SelectionConfig = SelectionConfig(),
):
    """One-classifier-at-a-time selection: train on the inner fold for each
    lambda, keep the best validation accuracy (ties -> larger lambda),
    then retrain on the full training data.

    trainer(dataset, lam) must return a model usable by core.utility.
    Returns (lambda_opt, validation_accuracy, final_model).
    """
    tr, val = split_train_test(data_train, config.inner_split, config.seed)
    best = None
    failures = []
    for lam in config.lambda_grid:
        try:
            model = trainer(tr, lam)
        except Exception as exc:  # noqa: BLE001 - statuses reported to caller
            failures.append((lam, repr(exc)))
            continue
        acc = utility(model, val)
        if best is None or (acc, lam) > (best[0], best[1]):
            best = (acc, lam)
    if best is None:
        raise SelectionError(f"every candidate failed: {failures}")
    acc, lam = best
    return lam, acc, trainer(data_train, lam)


@dataclass
class SweepRow:
    lambdas: tuple[float, ...]
    accuracy: float
    gaps: tuple[float, ...]  # required - observed per constraint, >0 = short
    admissible: bool
    failed: str | None = None


def sweep_to_csv(rows: Sequence[SweepRow]) -> str:
    if not rows:
        return "lambdas,accuracy,admissible,failed\n"
    width = max(len(r.gaps) for r in rows)
    header = (
        [f"lambda_{i}" for i in range(len(rows[0].lambdas))]
        + ["accuracy"]
        + [f"gap_{i}" for i in range(width)]
        + ["admissible", "failed"]
    )
    lines = [",".join(header)]
    for r in rows:
        gaps = list(r.gaps) + [float("nan")] * (width - len(r.gaps))
        lines.append(
            ",".join(
                [repr(l) for l in r.lambdas]
                + [repr(r.accuracy)]
                + [repr(g) for g in gaps]
                + [str(r.admissible), r.failed or ""]
            )
        )
    return "\n".join(lines) + "\n"


def select_lambda_joint(
    data_train: Dataset,
    trainer: Callable[[Dataset, tuple[float, ...]], object],
    constraint_pairs: Callable[[object, Dataset], Sequence[tuple[float, float]]],
    config: SelectionConfig = SelectionConfig(),
):
    """Joint selection for constrained variants.

    trainer(dataset, lambdas) trains on the inner fold for one grid cell;
    constraint_pairs(model, val_fold) yields (observed, required) benefit
    pairs for every fairness constraint. Returns
    (lambdas_opt, validation_accuracy, final_model, sweep_rows).
    """
    K = data_train.group_count
    tr, val = split_train_test(data_train, config.inner_split, config.seed)
    rows: list[SweepRow] = []
    best = None
    closest = None  # least-infeasible fallback, reported on failure
    for lambdas in itertools.product(config.lambda_grid, repeat=K):
        try:
            model = trainer(tr, lambdas)
        except Exception as exc:  # noqa: BLE001
            rows.append(SweepRow(lambdas, float("nan"), (), False, repr(exc)))
            continue
        pairs = list(constraint_pairs(model, val))
        gaps = tuple(req - obs for obs, req in pairs)
        ok = all(constraint_satisfied(obs, req, config) for obs, req in pairs)
        acc = utility(model, val)
        rows.append(SweepRow(lambdas, acc, gaps, ok))
        worst = max(gaps, default=0.0)
        if closest is None or worst < closest[0]:
            closest = (worst, lambdas)
        if ok:
            total = sum(lambdas)
            if best is None or (acc, total) > (best[0], best[1]):
                best = (acc, total, lambdas)
    if best is None:
        raise SelectionError(
            f"no admissible lambda combination; closest to feasible was "
            f"{closest[1]} (worst benefit shortfall {closest[0]:.4f})"
        )
    acc, _, lambdas = best
    return lambdas, acc, trainer(data_train, lambdas), rows
