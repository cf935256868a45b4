"""Command-line experiment runner.

Flags override a declarative YAML/JSON config file given with --config.
Exit code 0 only when every requested variant succeeded in every repeat.
"""

from __future__ import annotations

import argparse
import sys

import yaml

from .experiment import (
    CSV_SOURCE,
    ExperimentConfig,
    SYNTHETIC_LINEAR,
    SYNTHETIC_NONLINEAR,
    run_experiment,
)
from .trainers import (
    PARITY,
    PREFERRED_BOTH,
    PREFERRED_IMPACT,
    PREFERRED_TREATMENT,
    UNCONS,
)

VARIANT_ALIASES = {
    "uncons": UNCONS,
    "parity": PARITY,
    "preferred-treatment": PREFERRED_TREATMENT,
    "preferred-impact": PREFERRED_IMPACT,
    "preferred-both": PREFERRED_BOTH,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="preffair",
        description=(
            "Train and evaluate preference-based fair classifiers "
            "(preferred treatment / preferred impact) against "
            "unconstrained and impact-parity baselines."
        ),
        epilog=(
            "Ready-made CSV schemas for the COMPAS, Adult, and SQF datasets "
            "ship in the schemas/ directory of the source tree; they are "
            "best-effort reproductions of the feature lists used in prior "
            "work. SQF should be run with --balance."
        ),
    )
    parser.add_argument("--config", help="YAML/JSON config file; flags override it")
    parser.add_argument(
        "--dataset",
        choices=[SYNTHETIC_LINEAR, SYNTHETIC_NONLINEAR, CSV_SOURCE],
        help="data source",
    )
    parser.add_argument("--csv", dest="csv_path", help="CSV file for --dataset csv")
    parser.add_argument("--schema", dest="schema_path", help="schema file for the CSV")
    parser.add_argument(
        "--variants",
        help="comma-separated subset of: " + ",".join(VARIANT_ALIASES),
    )
    parser.add_argument("--repeats", type=int, help="number of train/test repeats")
    parser.add_argument("--train-frac", dest="train_fraction", type=float)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--n-samples", dest="n_samples", type=int,
                        help="synthetic sample count")
    parser.add_argument("--loss", choices=["logistic", "hinge", "kernel"])
    parser.add_argument("--kernel", dest="kernel_kind", choices=["rbf", "linear"])
    parser.add_argument("--gamma", type=float, help="RBF width (default: scale rule)")
    parser.add_argument("--svm-c", dest="svm_c", type=float, help="dual box cap C")
    parser.add_argument(
        "--lambda-grid",
        help="comma-separated L2 weights; a single value skips selection",
    )
    parser.add_argument("--tolerance-mode", choices=["or", "and"],
                        help="admissibility rule for joint lambda selection")
    parser.add_argument("--balance", action="store_true", default=None,
                        help="subsample the majority class to balance labels")
    parser.add_argument("--stratified", action="store_true", default=None,
                        help="stratify splits by (group, label)")
    parser.add_argument("--out", dest="out_dir", help="output directory")
    return parser


def config_from_args(args: argparse.Namespace) -> ExperimentConfig:
    doc: dict = {}
    if args.config:
        with open(args.config, "r", encoding="utf-8") as fh:
            doc = yaml.safe_load(fh) or {}
    overrides = {k: v for k, v in vars(args).items()
                 if k != "config" and v is not None}
    doc.update(overrides)
    if isinstance(doc.get("variants"), str):
        names = [v.strip().lower() for v in doc["variants"].split(",") if v.strip()]
        unknown = [v for v in names if v not in VARIANT_ALIASES]
        if unknown:
            raise SystemExit(f"unknown variants: {unknown}")
        doc["variants"] = tuple(VARIANT_ALIASES[v] for v in names)
    elif isinstance(doc.get("variants"), (list, tuple)):
        doc["variants"] = tuple(
            VARIANT_ALIASES.get(str(v).lower(), v) for v in doc["variants"]
        )
    if isinstance(doc.get("lambda_grid"), str):
        doc["lambda_grid"] = tuple(
            float(v) for v in doc["lambda_grid"].split(",") if v.strip()
        )
    elif isinstance(doc.get("lambda_grid"), (list, tuple)):
        doc["lambda_grid"] = tuple(float(v) for v in doc["lambda_grid"])
    known = set(ExperimentConfig.__dataclass_fields__)
    extra = set(doc) - known
    if extra:
        raise SystemExit(f"unknown config keys: {sorted(extra)}")
    return ExperimentConfig(**doc)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = config_from_args(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = run_experiment(config)
    for name in config.variants:
        acc = report.mean_accuracy(name)
        failures = sum(
            1 for rr in report.repeats
            if name in rr.variants and not rr.variants[name].ok
        )
        line = f"{name}: mean accuracy {acc:.4f}" if acc == acc else f"{name}: failed"
        if failures:
            line += f" ({failures}/{config.repeats} repeats failed)"
        print(line)
    print(f"reports written to {config.out_dir}")
    return 0 if report.all_ok else 1


if __name__ == "__main__":
    raise SystemExit(main())
