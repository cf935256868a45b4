"""Validation-fold regularization selection and admissibility rules."""

import numpy as np
import pytest

from preffair.core import GroupConditionalModel, LinearModel, utility
from preffair.selection import (
    SelectionConfig,
    SelectionError,
    SweepRow,
    constraint_satisfied,
    select_lambda_joint,
    select_lambda_single,
    sweep_to_csv,
)
from preffair.trainers import TrainSpec, train_unconstrained

from conftest import make_dataset


class TestConstraintSatisfied:
    def test_dominating_always_passes(self):
        cfg = SelectionConfig()
        assert constraint_satisfied(0.9, 0.5, cfg)
        assert constraint_satisfied(0.5, 0.5, cfg)

    def test_or_mode_ratio_clause(self):
        cfg = SelectionConfig(tolerance_mode="or")
        # 0.85/0.92 > 0.90 -> admissible though gap > 0.03
        assert constraint_satisfied(0.85, 0.92, cfg)

    def test_or_mode_absolute_clause(self):
        cfg = SelectionConfig(tolerance_mode="or")
        # ratio 0.03/0.05 = 0.6 fails, |gap| = 0.02 passes
        assert constraint_satisfied(0.03, 0.05, cfg)

    def test_or_mode_both_fail(self):
        cfg = SelectionConfig(tolerance_mode="or")
        assert not constraint_satisfied(0.50, 0.60, cfg)

    def test_and_mode_binds_both(self):
        cfg = SelectionConfig(tolerance_mode="and")
        assert not constraint_satisfied(0.85, 0.92, cfg)  # gap 0.07 > 0.03
        assert not constraint_satisfied(0.02, 0.05, cfg)  # ratio 0.4 < 0.9
        assert constraint_satisfied(0.88, 0.90, cfg)      # both clauses hold

    def test_zero_required_edge(self):
        cfg = SelectionConfig()
        assert constraint_satisfied(0.0, 0.0, cfg)

    def test_mode_validation(self):
        with pytest.raises(ValueError):
            SelectionConfig(tolerance_mode="xor")


def _data(n=300, seed=0):
    rng = np.random.default_rng(seed)
    X = np.vstack([rng.normal([1.5, 0], 1.0, (n // 2, 2)),
                   rng.normal([-1.5, 0], 1.0, (n // 2, 2))])
    y = np.array([1] * (n // 2) + [-1] * (n // 2))
    z = rng.integers(0, 2, n)
    return make_dataset(X, y, z)


class TestSelectSingle:
    def test_single_element_grid(self):
        data = _data()

        def trainer(ds, lam):
            return train_unconstrained(ds, TrainSpec(lambdas=lam))

        lam, acc, model = select_lambda_single(
            data, trainer, SelectionConfig(lambda_grid=(0.01,))
        )
        assert lam == 0.01
        assert 0.0 <= acc <= 1.0

    def test_tie_breaks_to_larger_lambda(self):
        data = _data()
        fixed = GroupConditionalModel(shared=LinearModel([1.0, 0.0, 0.0]))

        def trainer(ds, lam):
            return fixed  # identical accuracy for every lambda

        lam, _, _ = select_lambda_single(
            data, trainer, SelectionConfig(lambda_grid=(1e-4, 1e-2, 1.0))
        )
        assert lam == 1.0

    def test_reported_accuracy_recomputable(self):
        data = _data()
        cfg = SelectionConfig(lambda_grid=(1e-4, 1e-2))

        def trainer(ds, lam):
            return train_unconstrained(ds, TrainSpec(lambdas=lam))

        from preffair.dataio import split_train_test

        lam, acc, _ = select_lambda_single(data, trainer, cfg)
        tr, val = split_train_test(data, cfg.inner_split, cfg.seed)
        assert acc == utility(trainer(tr, lam), val)

    def test_all_failures_raise(self):
        data = _data()

        def trainer(ds, lam):
            raise RuntimeError("boom")

        with pytest.raises(SelectionError, match="every candidate failed"):
            select_lambda_single(data, trainer,
                                 SelectionConfig(lambda_grid=(0.1, 1.0)))

    def test_deterministic(self):
        data = _data()
        cfg = SelectionConfig(lambda_grid=(1e-4, 1e-2, 1.0))

        def trainer(ds, lam):
            return train_unconstrained(ds, TrainSpec(lambdas=lam))

        a = select_lambda_single(data, trainer, cfg)
        b = select_lambda_single(data, trainer, cfg)
        assert a[0] == b[0] and a[1] == b[1]


class TestSelectJoint:
    def _trainer(self):
        def trainer(ds, lambdas):
            return train_unconstrained(
                ds, TrainSpec(lambdas=dict(enumerate(lambdas)))
            )

        return trainer

    def test_single_cell_feasible(self):
        data = _data()

        def pairs(model, val):
            return [(1.0, 0.0)]  # trivially satisfied

        lambdas, acc, model, rows = select_lambda_joint(
            data, self._trainer(), pairs, SelectionConfig(lambda_grid=(0.01,))
        )
        assert lambdas == (0.01, 0.01)
        assert len(rows) == 1
        assert rows[0].admissible

    def test_sweep_covers_grid_power_k(self):
        data = _data()

        def pairs(model, val):
            return []

        _, _, _, rows = select_lambda_joint(
            data, self._trainer(), pairs,
            SelectionConfig(lambda_grid=(1e-4, 1e-2, 1.0)),
        )
        assert len(rows) == 9  # |grid|^K with K = 2

    def test_infeasible_grid_reports_closest(self):
        data = _data()

        def pairs(model, val):
            return [(0.0, 1.0)]  # nothing can satisfy a 1.0 benefit floor

        with pytest.raises(SelectionError, match="closest to feasible"):
            select_lambda_joint(
                data, self._trainer(), pairs,
                SelectionConfig(lambda_grid=(0.1, 1.0)),
            )

    def test_ties_break_to_larger_total(self):
        data = _data()
        fixed = GroupConditionalModel(shared=LinearModel([1.0, 0.0, 0.0]))

        def trainer(ds, lambdas):
            return fixed

        def pairs(model, val):
            return []

        lambdas, _, _, _ = select_lambda_joint(
            data, trainer, pairs, SelectionConfig(lambda_grid=(1e-4, 1.0))
        )
        assert lambdas == (1.0, 1.0)


class TestSweepCsv:
    def test_empty(self):
        assert sweep_to_csv([]) == "lambdas,accuracy,admissible,failed\n"

    def test_rows_and_padding(self):
        rows = [
            SweepRow((0.1, 0.2), 0.9, (0.0, -0.1), True),
            SweepRow((1.0, 1.0), float("nan"), (), False, "RuntimeError()"),
        ]
        text = sweep_to_csv(rows)
        lines = text.strip().split("\n")
        assert lines[0].startswith("lambda_0,lambda_1,accuracy,gap_0,gap_1")
        assert len(lines) == 3
        assert "RuntimeError()" in lines[2]
