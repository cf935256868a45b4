"""End-to-end experiment pipeline: split, select, train every requested
variant, evaluate on the test fold, and emit machine-readable reports.

Protocol per repeat: draw a 70/30 train/test split, pick regularization
weights on an inner validation fold (skipped when the grid has a single
value), train the parity baseline first (it is the disagreement point for
the preferred-impact and preferred-both variants), train the remaining
variants, then record test-fold accuracy and the full cross-benefit
matrix. Aggregates report mean and standard deviation over repeats.

All outputs are pure functions of (config, seeds): no timestamps, sorted
keys, repr-formatted floats, so identical configs give byte-identical
files.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, core, datagen, kernel as kern, trainers
from .ccp import CcpConfig
from .core import Dataset
from .dataio import (
    DatasetSchema,
    balance_classes,
    load_csv,
    split_train_test,
    split_train_test_stratified,
    standardize_folds,
)
from .optim import SolverConfig
from .selection import (
    SelectionConfig,
    select_lambda_joint,
    select_lambda_single,
)
from .trainers import (
    PARITY,
    PREFERRED_BOTH,
    PREFERRED_IMPACT,
    PREFERRED_TREATMENT,
    UNCONS,
    TrainSpec,
    VARIANTS,
)

SYNTHETIC_LINEAR = "synthetic-linear"
SYNTHETIC_NONLINEAR = "synthetic-nonlinear"
CSV_SOURCE = "csv"

DEFAULT_N = {SYNTHETIC_LINEAR: 20_000, SYNTHETIC_NONLINEAR: 4_000}


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: str = SYNTHETIC_LINEAR
    csv_path: str | None = None
    schema_path: str | None = None
    variants: tuple[str, ...] = VARIANTS
    repeats: int = 5
    train_fraction: float = 0.7
    seed: int = 0
    n_samples: int | None = None
    loss: str = trainers.LOGISTIC  # logistic | hinge | kernel
    kernel_kind: str = kern.RBF
    gamma: float | None = None
    svm_c: float = 1.0
    lambda_grid: tuple[float, ...] = (1e-4,)
    tolerance_mode: str = "or"
    balance: bool = False
    stratified: bool = False
    out_dir: str = "results"

    def __post_init__(self):
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        unknown = set(self.variants) - set(VARIANTS)
        if unknown:
            raise ValueError(f"unknown variants: {sorted(unknown)}")
        if self.dataset == CSV_SOURCE and not (self.csv_path and self.schema_path):
            raise ValueError("csv dataset needs csv_path and schema_path")


@dataclass
class VariantResult:
    variant: str
    model: object | None = None
    test_report: core.BenefitReport | None = None
    train_report: core.BenefitReport | None = None
    lambdas: tuple[float, ...] = ()
    converged: bool = True
    max_violation: float = 0.0
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.error is None


@dataclass
class RepeatResult:
    repeat: int
    split_seed: int
    variants: dict[str, VariantResult] = field(default_factory=dict)


@dataclass
class ExperimentReport:
    config: ExperimentConfig
    repeats: list[RepeatResult]
    group_count: int

    @property
    def all_ok(self) -> bool:
        return all(v.ok for r in self.repeats for v in r.variants.values())

    def mean_accuracy(self, variant: str) -> float:
        vals = [
            r.variants[variant].test_report.utility
            for r in self.repeats
            if variant in r.variants and r.variants[variant].ok
        ]
        return float(np.mean(vals)) if vals else float("nan")

    def mean_benefit_matrix(self, variant: str) -> np.ndarray:
        mats = [
            r.variants[variant].test_report.benefit_matrix
            for r in self.repeats
            if variant in r.variants and r.variants[variant].ok
        ]
        return np.mean(mats, axis=0)


def _base_dataset(config: ExperimentConfig):
    """Returns (dataset, numeric_indices) -- numeric indices drive the
    per-split standardization for CSV sources."""
    if config.dataset == SYNTHETIC_LINEAR:
        n = config.n_samples or DEFAULT_N[SYNTHETIC_LINEAR]
        return datagen.gen_linear_synthetic(n, config.seed), ()
    if config.dataset == SYNTHETIC_NONLINEAR:
        n = config.n_samples or DEFAULT_N[SYNTHETIC_NONLINEAR]
        return datagen.gen_nonlinear_synthetic(n, config.seed), ()
    if config.dataset == CSV_SOURCE:
        schema = DatasetSchema.from_file(config.schema_path)
        loaded = load_csv(config.csv_path, schema)
        data = loaded.dataset
        if config.balance:
            data = balance_classes(data, seed=config.seed)
        return data, loaded.numeric_indices
    raise ValueError(f"unknown dataset source {config.dataset!r}")


def _split_seed(base_seed: int, repeat: int) -> int:
    return int(np.random.SeedSequence((base_seed, repeat)).generate_state(1)[0])


def _needs_parity(variants) -> bool:
    return bool({PARITY, PREFERRED_IMPACT, PREFERRED_BOTH} & set(variants))


def _linear_constraint_pairs(model, val, parity_model=None, treatment=False,
                             impact=False):
    """(observed, required) validation-fold benefit pairs, exact indicator
    benefits as used by the evaluation predicates."""
    report = core.benefit_matrix(model, val)
    pairs = []
    if impact:
        base = core.benefit_matrix(parity_model, val)
        for g in range(val.group_count):
            pairs.append((report.benefit_matrix[g, g], base.benefit_matrix[g, g]))
    if treatment:
        B = report.benefit_matrix
        for g in range(val.group_count):
            for j in range(val.group_count):
                if j != g:
                    pairs.append((B[g, g], B[g, j]))
    return pairs


class _Runner:
    """Trains the requested variants for one repeat."""

    def __init__(self, config: ExperimentConfig, selection: SelectionConfig,
                 ccp_config: CcpConfig, solver: SolverConfig):
        self.config = config
        self.selection = selection
        self.ccp = ccp_config
        self.solver = solver
        self.kernel = kern.Kernel(config.kernel_kind, config.gamma)

    def _spec(self, lambdas) -> TrainSpec:
        return TrainSpec(loss=self.config.loss, lambdas=lambdas)

    def _select(self) -> bool:
        return len(self.config.lambda_grid) > 1

    def run(self, train: Dataset, result: RepeatResult):
        cfg = self.config
        wanted = list(cfg.variants)
        parity_vr = None
        if _needs_parity(wanted):
            parity_vr = self._train_parity(train)
            if PARITY in wanted:
                result.variants[PARITY] = parity_vr
        for name in wanted:
            if name == PARITY:
                continue
            try:
                result.variants[name] = self._train_variant(name, train, parity_vr)
            except Exception as exc:  # noqa: BLE001 - recorded per repeat
                result.variants[name] = VariantResult(name, error=repr(exc))
        return result

    # -- variant dispatch -------------------------------------------------

    def _train_parity(self, train: Dataset) -> VariantResult:
        try:
            if self.config.loss == "kernel":
                model = kern.train_parity_svm(
                    train, self.kernel, self.config.svm_c, self.solver,
                    gamma=self.config.gamma,
                )
                lambdas = ()
            elif self._select():
                def trainer(ds, lam):
                    return trainers.train_parity(ds, self._spec(lam), self.solver)

                lam, _, model = select_lambda_single(train, trainer, self.selection)
                lambdas = (lam,)
            else:
                lam = self.config.lambda_grid[0]
                model = trainers.train_parity(train, self._spec(lam), self.solver)
                lambdas = (lam,)
            return VariantResult(PARITY, model=model, lambdas=lambdas)
        except Exception as exc:  # noqa: BLE001
            return VariantResult(PARITY, error=repr(exc))

    def _train_variant(self, name, train, parity_vr) -> VariantResult:
        cfg = self.config
        if name in (PREFERRED_IMPACT, PREFERRED_BOTH) and (
            parity_vr is None or not parity_vr.ok
        ):
            return VariantResult(name, error="parity baseline unavailable")

        if cfg.loss == "kernel":
            return self._train_kernel_variant(name, train, parity_vr)

        if name == UNCONS:
            if self._select():
                def trainer(ds, lam):
                    return trainers.train_unconstrained(ds, self._spec(lam),
                                                        self.solver)

                lam, _, model = select_lambda_single(train, trainer, self.selection)
                lambdas = (lam,) * train.group_count
            else:
                lam = cfg.lambda_grid[0]
                model = trainers.train_unconstrained(train, self._spec(lam),
                                                     self.solver)
                lambdas = (lam,) * train.group_count
            return VariantResult(name, model=model, lambdas=lambdas)

        impact = name in (PREFERRED_IMPACT, PREFERRED_BOTH)
        treatment = name in (PREFERRED_TREATMENT, PREFERRED_BOTH)
        parity_model = parity_vr.model if impact else None

        def train_cell(ds, lambdas):
            spec = self._spec(dict(enumerate(lambdas)))
            if name == PREFERRED_IMPACT:
                return trainers.train_preferred_impact(
                    ds, parity_model, spec, self.ccp, self.solver
                )
            if name == PREFERRED_TREATMENT:
                return trainers.train_preferred_treatment(
                    ds, spec, self.ccp, self.solver
                )
            return trainers.train_preferred_both(
                ds, parity_model, spec, self.ccp, self.solver
            )

        if self._select():
            def trainer(ds, lambdas):
                return train_cell(ds, lambdas).model

            def pairs(model, val):
                return _linear_constraint_pairs(
                    model, val, parity_model, treatment=treatment, impact=impact
                )

            lambdas, _, model, _ = select_lambda_joint(
                train, trainer, pairs, self.selection
            )
            tr = train_cell(train, lambdas)
        else:
            lambdas = (cfg.lambda_grid[0],) * train.group_count
            tr = train_cell(train, lambdas)
        return VariantResult(
            name, model=tr.model, lambdas=tuple(lambdas),
            converged=tr.converged, max_violation=tr.max_violation,
        )

    def _train_kernel_variant(self, name, train, parity_vr) -> VariantResult:
        cfg = self.config
        if name == UNCONS:
            model = kern.train_unconstrained_svm(
                train, self.kernel, cfg.svm_c, self.solver, gamma=cfg.gamma
            )
            return VariantResult(name, model=model)
        if name == PREFERRED_IMPACT:
            tr = kern.train_kernel_preferred_impact(
                train, parity_vr.model, self.kernel, cfg.svm_c,
                self.ccp, self.solver, gamma=cfg.gamma,
            )
        elif name == PREFERRED_TREATMENT:
            tr = kern.train_kernel_preferred_treatment(
                train, self.kernel, cfg.svm_c, self.ccp, self.solver,
                gamma=cfg.gamma,
            )
        else:
            raise ValueError(
                f"variant {name} is not available with the kernel loss"
            )
        return VariantResult(name, model=tr.model, converged=tr.converged,
                             max_violation=tr.max_violation)


def run_experiment(
    config: ExperimentConfig,
    selection: SelectionConfig | None = None,
    ccp_config: CcpConfig = CcpConfig(),
    solver: SolverConfig | None = None,
    write_files: bool = True,
) -> ExperimentReport:
    if solver is None:
        # the dual solves need a tighter augmented-Lagrangian schedule to
        # drive the equality constraints below tolerance
        solver = (
            SolverConfig(max_iterations=1000, max_penalty_rounds=8)
            if config.loss == "kernel"
            else SolverConfig()
        )
    selection = selection or SelectionConfig(
        lambda_grid=config.lambda_grid,
        tolerance_mode=config.tolerance_mode,
        seed=config.seed,
    )
    base, numeric_idx = _base_dataset(config)
    runner = _Runner(config, selection, ccp_config, solver)
    repeats: list[RepeatResult] = []
    for r in range(config.repeats):
        split_seed = _split_seed(config.seed, r)
        if config.stratified:
            train, test = split_train_test_stratified(
                base, config.train_fraction, split_seed
            )
        else:
            train, test = split_train_test(base, config.train_fraction, split_seed)
        if numeric_idx:
            train, test = standardize_folds(train, test, numeric_idx)
        rr = RepeatResult(repeat=r, split_seed=split_seed)
        runner.run(train, rr)
        for vr in rr.variants.values():
            if vr.ok:
                vr.test_report = core.benefit_matrix(vr.model, test)
                vr.train_report = core.benefit_matrix(vr.model, train)
        repeats.append(rr)
    report = ExperimentReport(config, repeats, base.group_count)
    if write_files:
        emit_report(report)
    return report


# -- report emission -------------------------------------------------------


def _benefit_columns(K: int) -> list[str]:
    return [f"B{i}_of_theta{j}" for i in range(K) for j in range(K)]


def emit_report(report: ExperimentReport) -> dict[str, Path]:
    """Write results.csv (one row per repeat x variant), aggregate.json
    (means/stds, config echo, seeds), and long.csv (plot-ready)."""
    out = Path(report.config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    K = report.group_count
    bcols = _benefit_columns(K)

    rows_lines = [
        "repeat,variant,accuracy," + ",".join(bcols)
        + "," + ",".join("train_" + c for c in bcols)
        + ",converged,max_violation,lambdas,error"
    ]
    long_lines = ["repeat,variant,metric,value"]
    for rr in report.repeats:
        for name in report.config.variants:
            vr = rr.variants.get(name)
            if vr is None:
                continue
            if vr.ok:
                acc = repr(vr.test_report.utility)
                test_b = [repr(v) for v in vr.test_report.benefit_matrix.ravel()]
                train_b = [repr(v) for v in vr.train_report.benefit_matrix.ravel()]
                err = ""
                long_lines.append(f"{rr.repeat},{name},accuracy,{acc}")
                for c, v in zip(bcols, test_b):
                    long_lines.append(f"{rr.repeat},{name},{c},{v}")
            else:
                acc = ""
                test_b = [""] * (K * K)
                train_b = [""] * (K * K)
                err = vr.error.replace(",", ";")
            rows_lines.append(
                f"{rr.repeat},{name},{acc}," + ",".join(test_b)
                + "," + ",".join(train_b)
                + f",{vr.converged},{vr.max_violation!r}"
                + f",{'|'.join(repr(l) for l in vr.lambdas)},{err}"
            )

    aggregate = {
        "software_version": __version__,
        "config": {
            "dataset": report.config.dataset,
            "variants": list(report.config.variants),
            "repeats": report.config.repeats,
            "train_fraction": report.config.train_fraction,
            "seed": report.config.seed,
            "n_samples": report.config.n_samples,
            "loss": report.config.loss,
            "kernel": report.config.kernel_kind,
            "gamma": report.config.gamma,
            "svm_c": report.config.svm_c,
            "lambda_grid": list(report.config.lambda_grid),
            "tolerance_mode": report.config.tolerance_mode,
            "balance": report.config.balance,
            "stratified": report.config.stratified,
        },
        "split_seeds": [rr.split_seed for rr in report.repeats],
        "variants": {},
        "all_ok": report.all_ok,
    }
    for name in report.config.variants:
        accs, mats = [], []
        failures = 0
        for rr in report.repeats:
            vr = rr.variants.get(name)
            if vr is None:
                continue
            if vr.ok:
                accs.append(vr.test_report.utility)
                mats.append(vr.test_report.benefit_matrix)
            else:
                failures += 1
        entry = {"failures": failures, "runs": len(accs)}
        if accs:
            entry["accuracy_mean"] = float(np.mean(accs))
            entry["accuracy_std"] = float(np.std(accs))
            entry["benefit_matrix_mean"] = np.mean(mats, axis=0).tolist()
            entry["benefit_matrix_std"] = np.std(mats, axis=0).tolist()
        aggregate["variants"][name] = entry

    paths = {
        "results": out / "results.csv",
        "aggregate": out / "aggregate.json",
        "long": out / "long.csv",
    }
    paths["results"].write_text("\n".join(rows_lines) + "\n", encoding="utf-8")
    paths["aggregate"].write_text(
        json.dumps(aggregate, sort_keys=True, indent=2) + "\n", encoding="utf-8"
    )
    paths["long"].write_text("\n".join(long_lines) + "\n", encoding="utf-8")
    return paths
