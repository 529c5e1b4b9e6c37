"""Command-line surface: synthetic dataset generation, optimization runs,
and comparison reports with figures.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 budget
exhaustion with zero completed trials.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import string
import sys
from pathlib import Path

import numpy as np

from . import engine, plots, stats
from .engine import BindingError, BudgetConfig
from .pipeline import DataFormatError, derive_seed, load_dataset_dir, make_task
from .space import PortfolioFormatError, load_portfolio
from .tpe import ExhaustionError

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_EXHAUSTED = 4

DEFAULT_SEPARATION = 3.0  # class-mean distance in the synthetic generator


class CliError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _read_config_file(path: str) -> dict[str, str]:
    """Line-based 'key = value' configuration; CLI flags override."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value'", EXIT_CONFIG)
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


OPTIMIZE_DEFAULTS = {
    "data": None,
    "target": None,
    "all": False,
    "mode": "bilevel",
    "budget": 3600.0,
    "lower_seconds": 20.0,
    "lower_evals": None,
    "repeats": 1,
    "seed": 0,
    "portfolio": None,
    "out": "runs",
}


def _apply_config_file(args: argparse.Namespace, parser: argparse.ArgumentParser):
    if not getattr(args, "config", None):
        return
    file_values = _read_config_file(args.config)
    defaults = OPTIMIZE_DEFAULTS
    for key, raw in file_values.items():
        attr = key.replace("-", "_")
        if not hasattr(args, attr):
            raise CliError(f"unknown config key {key!r}", EXIT_CONFIG)
        # a flag explicitly given on the CLI wins over the file
        if getattr(args, attr) != defaults.get(attr):
            continue
        caster = {
            "all": lambda v: v.lower() in ("1", "true", "yes"),
            "budget": float,
            "lower_seconds": float,
            "lower_evals": int,
            "repeats": int,
            "seed": int,
        }.get(attr, str)
        setattr(args, attr, caster(raw))


def cmd_gen_synth(args) -> int:
    """Write synthetic CSV projects: Gaussian class-conditional features
    with per-project mean shifts (a controllable domain gap)."""
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    names = [f"synth{string.ascii_uppercase[i % 26]}" for i in range(args.projects)]
    sep = args.separation / np.sqrt(args.features)
    for name in names:
        shift = rng.normal(0.0, args.shift, size=args.features)
        n_pos = int(round(args.defect_rate * args.instances))
        labels = np.array([1] * n_pos + [0] * (args.instances - n_pos))
        labels = labels[rng.permutation(args.instances)]
        X = rng.normal(0.0, 1.0, size=(args.instances, args.features))
        X += shift
        X[labels == 1] += sep
        path = out / f"{name}.csv"
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow([f"f{i}" for i in range(args.features)] + ["label"])
            for row, lab in zip(X, labels):
                writer.writerow([repr(float(v)) for v in row] + [int(lab)])
        print(f"wrote {path}")
    return EXIT_OK


def _budget_from_args(args) -> BudgetConfig:
    if args.lower_evals is not None:
        return BudgetConfig(
            total_seconds=args.budget,
            lower_mode="evaluations",
            lower_amount=args.lower_evals,
        )
    return BudgetConfig(
        total_seconds=args.budget,
        lower_mode="seconds",
        lower_amount=args.lower_seconds,
    )


def cmd_optimize(args) -> int:
    if args.target is None and not args.all:
        raise CliError("one of --target or --all is required", EXIT_CONFIG)
    if args.mode not in ("bilevel", "single", "bilevel-l"):
        raise CliError(f"unknown mode {args.mode!r}", EXIT_CONFIG)
    try:
        datasets = load_dataset_dir(args.data)
    except (DataFormatError, OSError) as exc:
        raise CliError(str(exc), EXIT_DATA) from exc
    try:
        portfolio = load_portfolio(args.portfolio)
    except (PortfolioFormatError, OSError) as exc:
        raise CliError(str(exc), EXIT_CONFIG) from exc

    budget = _budget_from_args(args)
    if args.mode == "bilevel-l":
        budget = BudgetConfig(
            total_seconds=args.budget, lower_mode="evaluations",
            lower_amount=args.lower_evals or 100,
        )
    mode = "single" if args.mode == "single" else "bilevel"

    targets = [d.name for d in datasets] if args.all else [args.target]
    out_root = Path(args.out)
    out_root.mkdir(parents=True, exist_ok=True)
    summary_rows = []
    any_trials = False
    for target in targets:
        try:
            task = make_task(datasets, target, seed=args.seed)
        except KeyError as exc:
            raise CliError(str(exc), EXIT_DATA) from exc
        for rep in range(args.repeats):
            run_seed = derive_seed(args.seed, "repeat", rep)
            run_dir = out_root / target / f"rep{rep}"
            extra = {
                "dataset_dir": str(Path(args.data).resolve()),
                "portfolio_path": (
                    str(Path(args.portfolio).resolve()) if args.portfolio else None
                ),
                "repeat": rep,
                "base_seed": args.seed,
                "threads": int(os.environ.get("BILOPT_THREADS", "1")),
            }
            fn = (
                engine.optimize_single_level
                if mode == "single"
                else engine.optimize_bilevel
            )
            try:
                rec = fn(task, portfolio, budget, run_seed, run_dir, extra)
            except BindingError as exc:
                raise CliError(str(exc), EXIT_CONFIG) from exc
            except ExhaustionError as exc:
                raise CliError(str(exc), EXIT_EXHAUSTED) from exc
            any_trials = True
            summary_rows.append(
                [
                    target, rep, str(rec.combination), rec.training_auc,
                    rec.holdout_auc, rec.total_trials,
                    round(rec.elapsed_seconds, 3),
                ]
            )
            print(
                f"{target} rep{rep}: {rec.combination} "
                f"train_auc={rec.training_auc:.4f} holdout_auc={rec.holdout_auc:.4f} "
                f"({rec.total_trials} trials, {rec.elapsed_seconds:.1f}s)"
            )
    with open(out_root / "summary.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["target", "repeat", "combination", "training_auc", "holdout_auc",
             "trials", "elapsed_seconds"]
        )
        writer.writerows(summary_rows)
    return EXIT_OK if any_trials else EXIT_EXHAUSTED


def _collect_technique(root: Path) -> dict[str, list[float]]:
    """Map project -> holdout AUC per repeat (ordered by repeat index)."""
    values: dict[str, list[float]] = {}
    for rec_path in sorted(root.glob("*/rep*/recommendation.json")):
        project = rec_path.parent.parent.name
        with open(rec_path) as fh:
            rec = json.load(fh)
        values.setdefault(project, []).append(float(rec["holdout_auc"]))
    if not values:
        raise CliError(f"{root}: no recommendation files found", EXIT_DATA)
    return values


def cmd_compare(args) -> int:
    roots = [Path(d) for d in args.log_dirs]
    techniques = {r.name: _collect_technique(r) for r in roots}
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    # per-project mean/stddev
    means: dict[str, dict[str, float]] = {}
    with open(out / "means.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["technique", "project", "mean_auc", "stddev", "repeats"])
        for tech, per_project in sorted(techniques.items()):
            means[tech] = {}
            for project, vals in sorted(per_project.items()):
                means[tech][project] = float(np.mean(vals))
                writer.writerow(
                    [tech, project, float(np.mean(vals)),
                     float(np.std(vals)), len(vals)]
                )
    plots.mean_auc_chart(means, out / "mean_auc_chart.svg", "Mean holdout AUC")

    report = ["# Comparison report", "", "## Mean holdout AUC per project", ""]
    report.append("| technique | " + " | ".join(
        sorted({p for t in techniques.values() for p in t})) + " |")
    projects = sorted({p for t in techniques.values() for p in t})
    report.append("|" + "---|" * (len(projects) + 1))
    for tech in sorted(techniques):
        row = [tech] + [
            f"{means[tech][p]:.4f}" if p in means[tech] else "-" for p in projects
        ]
        report.append("| " + " | ".join(row) + " |")
    report.append("")

    if len(techniques) < 2:
        report.append("_Single technique: paired tests skipped._")
        (out / "report.md").write_text("\n".join(report) + "\n")
        print(f"report written to {out} (means only; need >= 2 techniques "
              "for paired tests)")
        return EXIT_OK

    # paired values: concatenate per-project repeat vectors in a fixed order
    paired: dict[str, list[float]] = {}
    shapes = set()
    for tech, per_project in techniques.items():
        vec: list[float] = []
        for project in projects:
            vec.extend(per_project.get(project, []))
        paired[tech] = vec
        shapes.add(
            tuple((p, len(per_project.get(p, []))) for p in projects)
        )
    if len(shapes) != 1:
        report.append("_Unequal repeat counts: paired tests refused._")
        (out / "report.md").write_text("\n".join(report) + "\n")
        print(f"report written to {out} (unequal repeats; paired tests refused)")
        return EXIT_OK

    names = sorted(paired)
    with open(out / "pairwise.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["technique_a", "technique_b", "wilcoxon_p", "a12"])
        for i, a_name in enumerate(names):
            for b_name in names[i + 1 :]:
                p = stats.wilcoxon_signed_rank(paired[a_name], paired[b_name])
                effect = stats.a12(paired[a_name], paired[b_name])
                writer.writerow([a_name, b_name, p, effect])

    table = stats.scott_knott(
        [stats.SampleSet(n, tuple(paired[n])) for n in names]
    )
    with open(out / "ranks.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["technique", "rank"])
        for n in names:
            writer.writerow([n, table.ranks[n]])
    report.append("## Scott-Knott ranks (larger = better)")
    report.append("")
    report.append("| technique | rank |")
    report.append("|---|---|")
    for n in sorted(names, key=lambda n: -table.ranks[n]):
        report.append(f"| {n} | {table.ranks[n]} |")
    (out / "report.md").write_text("\n".join(report) + "\n")
    plots.rank_bar_chart(table.ranks, out / "rank_chart.svg", "Scott-Knott ranks")
    print(f"report written to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="bilopt",
        description="Bi-level model discovery for cross-project defect prediction",
    )
    sub = parser.add_subparsers(dest="command")

    opt = sub.add_parser("optimize", help="run an optimization")
    opt.add_argument("--data", required=True, help="dataset directory (CSV per project)")
    opt.add_argument("--target", help="target project name")
    opt.add_argument("--all", action="store_true", help="round-robin over all projects")
    opt.add_argument("--mode", default="bilevel",
                     choices=["bilevel", "single", "bilevel-l"])
    opt.add_argument("--budget", type=float, default=3600.0,
                     help="total wall-clock budget in seconds")
    opt.add_argument("--lower-seconds", type=float, default=20.0)
    opt.add_argument("--lower-evals", type=int, default=None)
    opt.add_argument("--repeats", type=int, default=1)
    opt.add_argument("--seed", type=int, default=0)
    opt.add_argument("--portfolio", default=None, help="portfolio definition file")
    opt.add_argument("--out", default="runs", help="output directory")
    opt.add_argument("--config", default=None, help="key = value configuration file")

    cmp_p = sub.add_parser("compare", help="compare technique run directories")
    cmp_p.add_argument("log_dirs", nargs="+")
    cmp_p.add_argument("--out", default="report")

    gen = sub.add_parser("gen-synth", help="generate synthetic projects")
    gen.add_argument("--projects", type=int, default=3)
    gen.add_argument("--instances", type=int, default=300)
    gen.add_argument("--features", type=int, default=5)
    gen.add_argument("--shift", type=float, default=1.0,
                     help="stddev of per-project mean shifts")
    gen.add_argument("--defect-rate", type=float, default=0.3)
    gen.add_argument("--separation", type=float, default=DEFAULT_SEPARATION)
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--out", default="data")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help()
        return EXIT_CONFIG
    try:
        if args.command == "optimize":
            _apply_config_file(args, parser)
            if args.repeats < 1:
                raise CliError("--repeats must be >= 1", EXIT_CONFIG)
            return cmd_optimize(args)
        if args.command == "compare":
            return cmd_compare(args)
        return cmd_gen_synth(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
