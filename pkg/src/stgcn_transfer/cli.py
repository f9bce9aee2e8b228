"""Command-line interface.

Exit status is 0 on success, 1 when an input (argument, config key, path,
dataset) is invalid, and 2 when the work itself fails.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .config import ConfigError, ExperimentConfig
from .data import DatasetError, SyntheticConfig, generate_synthetic, kfold_split, load_dataset, save_dataset
from .evaluation import (
    auc,
    cross_validate,
    importance_property_analysis,
    predict_subject_scores,
    table_rows,
)
from .model import load_checkpoint, node_importance, save_checkpoint
from .training import NEEDS_SOURCE, STRATEGIES, run_strategy

log = logging.getLogger("stgcn_transfer")


class UsageError(ValueError):
    """Bad command-line input."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _dump_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, allow_nan=False) + "\n")


def _require_dir(path: str | None, what: str) -> Path:
    if path is None:
        raise UsageError(f"{what} directory is required")
    p = Path(path)
    if not p.is_dir():
        raise UsageError(f"{p}: {what} directory does not exist")
    return p


def _ensure_writable_parent(path: str) -> Path:
    p = Path(path)
    if p.exists() and p.is_dir():
        raise UsageError(f"{p}: output path is a directory")
    return p


# ------------------------------------------------------------------ commands


def cmd_gen_data(args) -> int:
    overrides = {}
    if args.config:
        overrides = dict(ExperimentConfig.load(args.config).synthetic)
    if args.separability is not None:
        overrides["separability"] = args.separability
    try:
        config = SyntheticConfig(**overrides)
    except DatasetError as exc:
        raise ConfigError(f"synthetic: {exc}") from None
    out = Path(args.out)
    if out.exists() and any(out.iterdir()):
        raise UsageError(f"{out}: output directory is not empty")
    source, target = generate_synthetic(config, seed=args.seed)
    save_dataset(source, out / "source")
    save_dataset(target, out / "target")
    _dump_json(out / "generator.json", {"seed": args.seed, "synthetic": asdict(config)})
    print(f"wrote {len(source)} source and {len(target)} target subjects to {out}")
    return 0


def _load_pair(config: ExperimentConfig, source_dir, target_dir, need_source: bool):
    source_path = _require_dir(source_dir, "source data") if need_source or source_dir is not None else None
    target_path = _require_dir(target_dir, "target data")
    target = load_dataset(target_path, require_labels=True)
    source = load_dataset(source_path) if need_source else None
    return source, target


def cmd_train(args) -> int:
    config = ExperimentConfig.load(args.config)
    if args.strategy not in STRATEGIES:
        raise UsageError(f"--strategy must be one of {', '.join(STRATEGIES)}")
    out = _ensure_writable_parent(args.out)
    source, target = _load_pair(config, args.data_source, args.data_target, args.strategy in NEEDS_SOURCE)
    train_config = config.train_config(args.strategy)
    model_config = config.model_config(target.num_nodes)
    # hold out the first cross-validation fold for evaluation
    train_idx, test_idx = kfold_split(target, config.folds, config.seed)[0]
    rng = np.random.default_rng([config.seed, 0])
    result = run_strategy(train_config, model_config, target, source, train_indices=train_idx, rng=rng)
    scores = predict_subject_scores(result.params, target, test_idx, train_config.subsequence_length)
    fold_auc = auc(scores, target.labels[test_idx])
    checkpoint = Path(args.checkpoint) if args.checkpoint else out.with_name(out.stem + ".checkpoint.json")
    save_checkpoint(checkpoint, result.model_config, result.params, config.seed,
                    extra={"strategy": args.strategy, "train_config": asdict(result.config)})
    report = {
        "config": config.resolved(target.num_nodes),
        "strategy": args.strategy,
        "checkpoint": str(checkpoint),
        "summary": {args.strategy: {"mean": fold_auc, "std": 0.0, "fold_mean_auc": [fold_auc]}},
        "runs": [{
            "strategy": args.strategy, "seed": config.seed, "fold": 0, "auc": fold_auc,
            "test_ids": [target.ids[i] for i in test_idx], "scores": scores.tolist(),
            "node_importance": node_importance(result.params.phi).tolist(), "history": result.history,
        }],
    }
    _dump_json(out, report)
    print(f"{args.strategy}: held-out AUC {fold_auc:.4f}; checkpoint {checkpoint}")
    return 0


def cmd_analyze(args) -> int:
    ckpt = Path(args.checkpoint)
    if not ckpt.is_file():
        raise UsageError(f"{ckpt}: checkpoint not found")
    out = _ensure_writable_parent(args.out)
    try:
        model_config, params, seed, extra = load_checkpoint(ckpt)
    except (ValueError, KeyError) as exc:
        raise UsageError(f"{ckpt}: {exc}") from None
    dataset = load_dataset(_require_dir(args.data, "data"))
    if dataset.num_nodes != model_config.num_nodes:
        raise UsageError(f"{args.data}: {dataset.num_nodes} nodes, checkpoint expects {model_config.num_nodes}")
    length = args.length or (extra or {}).get("train_config", {}).get("subsequence_length", 64)
    length = min(length, dataset.num_timepoints)
    result = importance_property_analysis(params, dataset, length)
    result.update({"checkpoint": str(ckpt), "seed": seed, "window_length": length})
    _dump_json(out, result)
    print(f"analysis of {len(dataset)} subjects written to {out}")
    return 0


def report_csv(report: dict) -> str:
    rows = table_rows(report)
    buf = io.StringIO()
    header = ["strategy", "mean_auc", "std_auc"] + sorted(
        {k for r in rows for k in r if k.startswith("fold_")}, key=lambda k: int(k.split("_")[1]))
    writer = csv.DictWriter(buf, fieldnames=header, lineterminator="\n")
    writer.writeheader()
    for r in rows:
        writer.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
    return buf.getvalue()


def report_runs_csv(report: dict) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["strategy", "seed", "fold", "auc"])
    for r in report["runs"]:
        writer.writerow([r["strategy"], r["seed"], r["fold"], repr(float(r["auc"]))])
    return buf.getvalue()


def _read_report(path) -> dict:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{p}: results file not found")
    try:
        report = json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise UsageError(f"{p}: invalid JSON ({exc})") from None
    if not isinstance(report, dict) or "summary" not in report or "runs" not in report:
        raise UsageError(f"{p}: not a results file (needs summary and runs)")
    return report


def cmd_report(args) -> int:
    report = _read_report(args.input)
    out = _ensure_writable_parent(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        out.write_text(report_csv(report))
        out.with_name(out.stem + "_folds.csv").write_text(report_runs_csv(report))
    else:
        _dump_json(out, {"config": report.get("config"), "summary": report["summary"]})
    return 0


def cmd_compare(args) -> int:
    config = ExperimentConfig.load(args.config)
    strategies = [s.strip() for s in args.strategies.split(",") if s.strip()]
    for s in strategies:
        if s not in STRATEGIES:
            raise UsageError(f"--strategies: unknown strategy {s!r}")
    if args.jobs < 1:
        raise UsageError("--jobs must be at least 1")
    out = _ensure_writable_parent(args.out)
    results_path = Path(args.results) if args.results else out.with_name("results.json")
    need_source = any(s in NEEDS_SOURCE for s in strategies)
    if config.data:
        source, target = _load_pair(config, config.data.get("source"), config.data.get("target"), need_source)
    else:
        source, target = generate_synthetic(config.synthetic_config(), seed=config.seed)
    train_config = config.train_config(strategies[0])
    model_config = config.model_config(target.num_nodes)
    report = cross_validate(strategies, train_config, model_config, target, source, seeds=config.seeds,
                            n_folds=config.folds, jobs=args.jobs, keep_history=not args.no_history)
    report = {"config": config.resolved(target.num_nodes), "strategies": strategies, **report}
    _dump_json(results_path, report)
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(report_csv(report))
    out.with_name(out.stem + "_folds.csv").write_text(report_runs_csv(report))
    for s in strategies:
        print(f"{s:9s} AUC {report['summary'][s]['mean']:.4f} +/- {report['summary'][s]['std']:.4f}")
    return 0


# ------------------------------------------------------------------ entry point


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="stgcn-transfer", description="Graph transfer learning on node time series.")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("gen-data", help="write a synthetic source/target benchmark")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--separability", type=float)
    p.add_argument("--config", help="config file whose 'synthetic' section sets generator options")
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("train", help="train one strategy, evaluate on a held-out fold, save a checkpoint")
    p.add_argument("--config", required=True)
    p.add_argument("--strategy", required=True)
    p.add_argument("--data-source")
    p.add_argument("--data-target", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--checkpoint", help="checkpoint path (default: next to --out)")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("analyze", help="node importance vs graph properties for a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--length", type=int, help="window length for feature extraction")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("report", help="render a results file as a table")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--format", choices=("csv", "json"), required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("compare", help="cross-validate several strategies")
    p.add_argument("--config", required=True)
    p.add_argument("--strategies", default=",".join(STRATEGIES))
    p.add_argument("--out", required=True, help="table CSV path")
    p.add_argument("--results", help="results JSON path (default: results.json beside --out)")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--no-history", action="store_true", help="omit per-iteration loss histories")
    p.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a subcommand is required")
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.verbose:
        logging.basicConfig(level=logging.INFO, format="%(message)s")
    try:
        return args.func(args)
    except (UsageError, ConfigError, DatasetError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # noqa: BLE001 - reported as a runtime failure
        print(f"runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
