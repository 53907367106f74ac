"""Command-line interface.

Subcommands cover the full pipeline: prepare (validate + stratified split),
augment, train, evaluate, predict, baseline, report, and grid. Every command
that writes artifacts also writes a manifest with input and output digests.

Exit codes: 0 success, 1 usage or configuration error, 2 data error
(including the held-out guard), 3 runtime failure during training or
generation.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path

from . import __version__
from .data import (
    DataError,
    Dataset,
    class_distribution,
    load_dataset,
    read_predictions,
    stratified_split,
    write_dataset,
    write_predictions,
)
from .evaluation import (
    confusion_matrix,
    macro_f1,
    read_matrix,
    render_report,
    write_matrix,
    write_metrics,
)
from .manifest import RunManifest
from .taxonomy import ClarityLabel, clarity_name, parse_clarity

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3

_HELDOUT_MARKERS = ("test", "heldout", "held-out", "held_out")


class UsageError(Exception):
    """Bad flags or configuration; maps to exit code 1."""


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2; keep 2 for data only
        raise UsageError(message)


def _guard_heldout(path: str | Path, allow: bool) -> None:
    """Refuse to feed held-out files into training or augmentation.

    The guard is on the file name, so renaming is an explicit act; --allow-heldout
    turns it off for deliberate final runs.
    """
    if allow:
        return
    name = Path(path).name.lower()
    if any(marker in name for marker in _HELDOUT_MARKERS):
        raise DataError(
            f"{path} looks like a held-out split; pass --allow-heldout to use it for fitting"
        )


def _load(path: str, name: str) -> Dataset:
    return load_dataset(path, name=name)


def _clarity_names() -> list[str]:
    return [clarity_name(ClarityLabel(i)) for i in range(len(ClarityLabel))]


def _read_config_file(path: str) -> dict[str, str]:
    out: dict[str, str] = {}
    for line in Path(path).read_text("utf-8").splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise UsageError(f"bad config line (expected key=value): {line!r}")
        key, _, value = line.partition("=")
        out[key.strip()] = value.strip()
    return out


def _training_config(args) -> "TrainingConfig":
    from .train import TrainingConfig

    overrides: dict[str, object] = {}
    if getattr(args, "config", None):
        raw = _read_config_file(args.config)
        valid = {f.name: f.type for f in dataclasses.fields(TrainingConfig)}
        for key, value in raw.items():
            if key not in valid:
                raise UsageError(f"unknown training option {key!r} in {args.config}")
            current = getattr(TrainingConfig(), key)
            if isinstance(current, bool):
                overrides[key] = value.lower() in ("1", "true", "yes")
            elif isinstance(current, int):
                overrides[key] = int(value)
            elif isinstance(current, float):
                overrides[key] = float(value)
            else:
                overrides[key] = value
    if getattr(args, "epochs", None) is not None:
        overrides["epochs"] = args.epochs
    if getattr(args, "lr", None) is not None:
        overrides["base_lr"] = args.lr
    overrides["seed"] = args.seed
    try:
        return TrainingConfig(**overrides)
    except (TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


# ---------------------------------------------------------------------------
# subcommand implementations
# ---------------------------------------------------------------------------


def _cmd_prepare(args) -> int:
    manifest = RunManifest(command="prepare", seed=args.seed)
    manifest.add_input(args.data)
    dataset = _load(args.data, "full")
    train, dev = stratified_split(dataset, args.dev_fraction, args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    train_path, dev_path = out / "train.tsv", out / "dev.tsv"
    write_dataset(train, train_path)
    write_dataset(dev, dev_path)
    manifest.add_output(train_path)
    manifest.add_output(dev_path)
    manifest.config = {"dev_fraction": args.dev_fraction}
    manifest.stats = {
        "records": len(dataset),
        "train_records": len(train),
        "dev_records": len(dev),
        "train_distribution": {
            clarity_name(label): count
            for label, (count, _) in class_distribution(train).items()
        },
        "dev_distribution": {
            clarity_name(label): count
            for label, (count, _) in class_distribution(dev).items()
        },
    }
    manifest.finish()
    manifest.write(out)
    print(f"wrote {train_path} ({len(train)} records) and {dev_path} ({len(dev)} records)")
    return EXIT_OK


def _parse_targets(raw: list[str]) -> dict[ClarityLabel, int]:
    targets: dict[ClarityLabel, int] = {}
    for item in raw:
        if "=" not in item:
            raise UsageError(f"bad --target {item!r}, expected label=count")
        label_text, _, count_text = item.partition("=")
        try:
            label = parse_clarity(label_text)
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
        try:
            targets[label] = int(count_text)
        except ValueError:
            raise UsageError(f"bad --target count {count_text!r}") from None
    return targets


def _cmd_augment(args) -> int:
    from .augment import (
        AugmentationPlan,
        BalanceMode,
        GenerationError,
        HttpGeneratorClient,
        balance_plan,
        run_plan,
    )
    from .data import Source

    _guard_heldout(args.train, args.allow_heldout)
    manifest = RunManifest(command="augment", seed=args.seed)
    manifest.add_input(args.train)
    train = _load(args.train, "train")

    mode = BalanceMode(args.mode)
    partial = _parse_targets(args.target) if args.target else None
    if mode == BalanceMode.PARTIAL and not partial:
        raise UsageError("partial mode needs at least one --target label=count")
    distribution = class_distribution(train)
    try:
        to_generate = balance_plan(distribution, mode, partial)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    targets = {
        label: distribution.get(label, (0, 0.0))[0] + extra
        for label, extra in to_generate.items()
    }

    source = Source.GEMINI_SYNTHETIC if args.strategy == "frame" else Source.CLAUDE_SYNTHETIC
    plan = AugmentationPlan(targets=targets, source=source, seed=args.seed)

    client = None
    endpoint = os.environ.get("GENERATOR_ENDPOINT")
    if args.online:
        if not endpoint:
            raise UsageError("--online requires GENERATOR_ENDPOINT in the environment")
        client = HttpGeneratorClient(
            endpoint,
            model=args.generator_model,
            api_key=os.environ.get("GENERATOR_API_KEY"),
        )

    synthetic = run_plan(train, plan, client=client)
    combined = Dataset(records=tuple(train) + tuple(synthetic), name="augmented")

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    augmented_path = out / "augmented.tsv"
    synthetic_path = out / "synthetic.tsv"
    write_dataset(combined, augmented_path)
    write_dataset(Dataset(records=tuple(synthetic), name="synthetic"), synthetic_path)
    manifest.add_output(augmented_path)
    manifest.add_output(synthetic_path)
    per_class = {}
    for pair in synthetic:
        key = clarity_name(pair.clarity)
        per_class[key] = per_class.get(key, 0) + 1
    manifest.config = {
        "mode": mode.value,
        "strategy": args.strategy,
        "online": bool(client),
    }
    manifest.stats = {
        "original_records": len(train),
        "generated_records": len(synthetic),
        "generated_per_class": per_class,
        "combined_records": len(combined),
    }
    manifest.finish()
    manifest.write(out)
    print(
        f"generated {len(synthetic)} synthetic records "
        f"({', '.join(f'{k}: {v}' for k, v in sorted(per_class.items())) or 'none'})"
    )
    print(f"wrote {augmented_path} ({len(combined)} records)")
    return EXIT_OK


def _cmd_train(args) -> int:
    from .model import ClarityClassifier, ModelConfig, save_checkpoint
    from .train import train_loop

    _guard_heldout(args.train, args.allow_heldout)
    manifest = RunManifest(command="train", seed=args.seed)
    manifest.add_input(args.train)
    manifest.add_input(args.dev)
    train = _load(args.train, "train")
    dev = _load(args.dev, "dev")

    config = _training_config(args)
    model_config = ModelConfig(
        model_id=args.model_id,
        use_features=not args.no_features,
        max_length=args.max_length,
        seed=args.seed,
    )
    model = ClarityClassifier(model_config)
    history = train_loop(model, train, dev, config)

    out = Path(args.out)
    checkpoint_dir = out / "checkpoint"
    save_checkpoint(model, checkpoint_dir)
    history_path = out / "history.json"
    history_path.write_text(
        json.dumps(
            {
                "train_loss": history.train_loss,
                "dev_macro_f1": history.dev_macro_f1,
                "best_epoch": history.best_epoch,
                "best_dev_macro_f1": history.best_dev_macro_f1,
                "stopped_early": history.stopped_early,
                "optimizer_steps": history.optimizer_steps,
                "wall_seconds": history.wall_seconds,
            },
            indent=2,
        )
        + "\n",
        "utf-8",
    )
    if not args.no_figures:
        from .figures import training_curves

        manifest.add_output(
            training_curves(history.train_loss, history.dev_macro_f1, out / "training_curves.png")
        )
    manifest.add_output(checkpoint_dir / "weights.pt")
    manifest.add_output(checkpoint_dir / "config.txt")
    manifest.add_output(history_path)
    manifest.config = dataclasses.asdict(config) | {"model_id": args.model_id}
    manifest.stats = {
        "best_epoch": history.best_epoch,
        "best_dev_macro_f1": history.best_dev_macro_f1,
        "stopped_early": history.stopped_early,
        "epochs_run": len(history.train_loss),
    }
    manifest.finish()
    manifest.write(out)
    print(
        f"best dev macro F1 {history.best_dev_macro_f1:.4f} at epoch {history.best_epoch}; "
        f"checkpoint in {checkpoint_dir}"
    )
    return EXIT_OK


def _cmd_predict(args) -> int:
    from .model import load_checkpoint

    manifest = RunManifest(command="predict", seed=None)
    manifest.add_input(args.data)
    model = load_checkpoint(args.model)
    dataset = _load(args.data, "input")
    predicted = model.predict(list(dataset))
    labeled = [(pair, ClarityLabel(int(code))) for pair, code in zip(dataset, predicted)]
    out_path = Path(args.out)
    write_predictions(labeled, out_path)
    manifest.add_output(out_path)
    manifest.stats = {"records": len(dataset)}
    manifest.finish()
    manifest.write(out_path.parent)
    print(f"wrote {out_path} ({len(dataset)} predictions)")
    return EXIT_OK


def _gold_and_predicted(args) -> tuple[list[int], list[int]]:
    gold_data = _load(args.gold, "gold")
    if any(p.clarity is None for p in gold_data):
        raise DataError(f"{args.gold} has records without a clarity label")
    gold_ids = [p.record_id or str(i) for i, p in enumerate(gold_data)]
    gold = [int(p.clarity) for p in gold_data]
    if args.pred:
        entries = read_predictions(args.pred)
        by_id = dict(entries)
        if len(by_id) != len(entries):
            raise DataError(f"{args.pred} repeats a record id")
        missing = [i for i in gold_ids if i not in by_id]
        if missing:
            raise DataError(
                f"predictions missing for {len(missing)} gold ids (first: {missing[0]})"
            )
        predicted = [int(by_id[i]) for i in gold_ids]
    else:
        from .model import load_checkpoint

        model = load_checkpoint(args.model)
        predicted = [int(c) for c in model.predict(list(gold_data))]
    return gold, predicted


def _cmd_evaluate(args) -> int:
    if bool(args.pred) == bool(args.model):
        raise UsageError("give exactly one of --pred or --model")
    manifest = RunManifest(command="evaluate", seed=None)
    manifest.add_input(args.gold)
    if args.pred:
        manifest.add_input(args.pred)
    gold, predicted = _gold_and_predicted(args)
    matrix = confusion_matrix(gold, predicted, num_classes=len(ClarityLabel))
    report = render_report(matrix, style=args.style)
    print(report, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / ("report.md" if args.style == "markdown" else "report.txt")
        report_path.write_text(report, "utf-8")
        matrix_path = out / "confusion_matrix.tsv"
        write_matrix(matrix, matrix_path)
        from .evaluation import per_class_prf

        metrics = {"macro_f1": macro_f1(matrix), "accuracy": matrix.accuracy()}
        for label, m in enumerate(per_class_prf(matrix)):
            prefix = f"class_{label}"
            metrics[f"{prefix}_precision"] = m.precision
            metrics[f"{prefix}_recall"] = m.recall
            metrics[f"{prefix}_f1"] = m.f1
        metrics_path = out / "metrics.txt"
        write_metrics(metrics, metrics_path)
        for path in (report_path, matrix_path, metrics_path):
            manifest.add_output(path)
        if not args.no_figures:
            from .figures import confusion_heatmap, per_class_bars

            names = _clarity_names()
            manifest.add_output(confusion_heatmap(matrix, names, out / "confusion_matrix.png"))
            manifest.add_output(per_class_bars(matrix, names, out / "per_class_metrics.png"))
        manifest.finish()
        manifest.write(out)
    return EXIT_OK


def _cmd_baseline(args) -> int:
    from .baselines import BASELINE_KINDS, run_baseline

    if args.kind not in BASELINE_KINDS:
        raise UsageError(
            f"unknown baseline kind {args.kind!r}; choose from {', '.join(BASELINE_KINDS)}"
        )
    _guard_heldout(args.train, args.allow_heldout)
    manifest = RunManifest(command="baseline", seed=args.seed)
    for path in (args.train, args.dev, args.test):
        manifest.add_input(path)
    train = _load(args.train, "train")
    dev = _load(args.dev, "dev")
    test = _load(args.test, "test")
    result = run_baseline(
        args.kind, train, dev, test, seed=args.seed, model_id=args.model_id
    )
    report = render_report(result.matrix)
    print(f"baseline: {result.name}")
    print(report, end="")
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        report_path = out / "report.txt"
        report_path.write_text(f"baseline: {result.name}\n" + report, "utf-8")
        matrix_path = out / "confusion_matrix.tsv"
        write_matrix(result.matrix, matrix_path)
        metrics_path = out / "metrics.txt"
        write_metrics({"macro_f1": result.macro_f1}, metrics_path)
        for path in (report_path, matrix_path, metrics_path):
            manifest.add_output(path)
        manifest.config = {"kind": args.kind}
        manifest.stats = {"macro_f1": result.macro_f1}
        manifest.finish()
        manifest.write(out)
    return EXIT_OK


def _cmd_report(args) -> int:
    from .figures import confusion_heatmap, per_class_bars

    manifest = RunManifest(command="report", seed=None)
    manifest.add_input(args.matrix)
    matrix = read_matrix(args.matrix)
    names = _clarity_names() if matrix.size == len(ClarityLabel) else None
    report = render_report(matrix, names=names, style=args.style)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report_path = out / ("report.md" if args.style == "markdown" else "report.txt")
    report_path.write_text(report, "utf-8")
    figure_names = names or [f"class {i}" for i in range(matrix.size)]
    heatmap = confusion_heatmap(matrix, figure_names, out / "confusion_matrix.png")
    bars = per_class_bars(matrix, figure_names, out / "per_class_metrics.png")
    for path in (report_path, heatmap, bars):
        manifest.add_output(path)
    manifest.finish()
    manifest.write(out)
    print(report, end="")
    print(f"wrote {report_path}, {heatmap.name}, {bars.name} to {out}")
    return EXIT_OK


def _cmd_grid(args) -> int:
    from .figures import grid_heatmap
    from .model import ModelConfig
    from .train import grid_search

    _guard_heldout(args.train, args.allow_heldout)
    manifest = RunManifest(command="grid", seed=args.seed)
    manifest.add_input(args.train)
    manifest.add_input(args.dev)
    train = _load(args.train, "train")
    dev = _load(args.dev, "dev")
    base = _training_config(args)
    model_config = ModelConfig(
        model_id=args.model_id,
        use_features=not args.no_features,
        max_length=args.max_length,
        seed=args.seed,
    )
    lrs = [float(v) for v in args.lrs.split(",") if v]
    decays = [float(v) for v in args.decays.split(",") if v]
    if not lrs or not decays:
        raise UsageError("--lrs and --decays must each name at least one value")
    cells = grid_search(train, dev, model_config, base, lrs, decays)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    rows = ["base_lr\tllrd_decay\tdev_macro_f1\tbest_epoch\terror"]
    for cell in cells:
        score = "" if cell.error else f"{cell.dev_macro_f1:.4f}"
        rows.append(
            f"{cell.base_lr:g}\t{cell.llrd_decay:g}\t{score}\t{cell.best_epoch}\t"
            f"{cell.error or ''}"
        )
    grid_path = out / "grid.tsv"
    grid_path.write_text("\n".join(rows) + "\n", "utf-8")
    scores_map = {
        (c.base_lr, c.llrd_decay): c.dev_macro_f1 for c in cells if c.error is None
    }
    figure = grid_heatmap(scores_map, lrs, decays, out / "grid.png")
    manifest.add_output(grid_path)
    manifest.add_output(figure)
    manifest.config = {"lrs": lrs, "decays": decays}
    top = cells[0]
    manifest.stats = {
        "cells": len(cells),
        "failed_cells": sum(1 for c in cells if c.error),
        "top_lr": top.base_lr,
        "top_decay": top.llrd_decay,
        "top_dev_macro_f1": top.dev_macro_f1,
    }
    manifest.finish()
    manifest.write(out)
    print(f"ranked {len(cells)} cells into {grid_path}")
    if top.error is None:
        print(
            f"top cell: lr={top.base_lr:g} decay={top.llrd_decay:g} "
            f"dev macro F1 {top.dev_macro_f1:.4f} (epoch {top.best_epoch})"
        )
    else:
        print("every cell failed; see grid.tsv for errors")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="clarity", description=__doc__)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log at INFO level")
    commands = parser.add_subparsers(dest="command", required=True)

    def add_common(sub, *, seed=True, out_required=True):
        if seed:
            sub.add_argument("--seed", type=int, default=0)
        sub.add_argument("--out", required=out_required, help="output directory")

    prepare = commands.add_parser("prepare", help="validate a corpus and split train/dev")
    prepare.add_argument("--data", required=True)
    prepare.add_argument("--dev-fraction", type=float, default=0.2)
    add_common(prepare)
    prepare.set_defaults(handler=_cmd_prepare)

    augment = commands.add_parser("augment", help="generate synthetic minority-class records")
    augment.add_argument("--train", required=True)
    augment.add_argument("--mode", choices=["full-balance", "partial"], default="full-balance")
    augment.add_argument("--strategy", choices=["frame", "lexical"], default="frame")
    augment.add_argument(
        "--target", action="append", default=[],
        help="partial-mode post-augmentation size, label=count (repeatable)",
    )
    augment.add_argument(
        "--online", action="store_true",
        help="use the HTTP generator named by GENERATOR_ENDPOINT/GENERATOR_API_KEY",
    )
    augment.add_argument("--generator-model", default="generator")
    augment.add_argument("--allow-heldout", action="store_true")
    add_common(augment)
    augment.set_defaults(handler=_cmd_augment)

    train = commands.add_parser("train", help="fit the feature-fused classifier")
    train.add_argument("--train", required=True)
    train.add_argument("--dev", required=True)
    train.add_argument("--model-id", default="tiny")
    train.add_argument("--config", help="key=value training overrides")
    train.add_argument("--epochs", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--max-length", type=int, default=256)
    train.add_argument("--no-features", action="store_true")
    train.add_argument("--no-figures", action="store_true")
    train.add_argument("--allow-heldout", action="store_true")
    add_common(train)
    train.set_defaults(handler=_cmd_train)

    predict = commands.add_parser("predict", help="write label predictions for a file")
    predict.add_argument("--model", required=True, help="checkpoint directory")
    predict.add_argument("--data", required=True)
    predict.add_argument("--out", required=True, help="prediction file path")
    predict.set_defaults(handler=_cmd_predict)

    evaluate = commands.add_parser("evaluate", help="score predictions against gold labels")
    evaluate.add_argument("--gold", required=True)
    evaluate.add_argument("--pred", help="prediction file from `predict`")
    evaluate.add_argument("--model", help="checkpoint directory to predict with")
    evaluate.add_argument("--style", choices=["text", "markdown"], default="text")
    evaluate.add_argument("--no-figures", action="store_true")
    evaluate.add_argument("--out", help="optional output directory")
    evaluate.set_defaults(handler=_cmd_evaluate)

    baseline = commands.add_parser("baseline", help="run a reference system")
    baseline.add_argument("--kind", required=True)
    baseline.add_argument("--train", required=True)
    baseline.add_argument("--dev", required=True)
    baseline.add_argument("--test", required=True)
    baseline.add_argument("--model-id", default="tiny")
    baseline.add_argument("--allow-heldout", action="store_true")
    baseline.add_argument("--seed", type=int, default=0)
    baseline.add_argument("--out", help="optional output directory")
    baseline.set_defaults(handler=_cmd_baseline)

    report = commands.add_parser("report", help="render text report and figures from a matrix")
    report.add_argument("--matrix", required=True, help="confusion matrix TSV")
    report.add_argument("--style", choices=["text", "markdown"], default="text")
    add_common(report, seed=False)
    report.set_defaults(handler=_cmd_report)

    grid = commands.add_parser("grid", help="rank lr x decay cells by dev macro F1")
    grid.add_argument("--train", required=True)
    grid.add_argument("--dev", required=True)
    grid.add_argument("--model-id", default="tiny")
    grid.add_argument("--config", help="key=value training overrides")
    grid.add_argument("--epochs", type=int)
    grid.add_argument("--lr", type=float, help=argparse.SUPPRESS)
    grid.add_argument("--lrs", default="2e-5,3e-5,5e-5")
    grid.add_argument("--decays", default="0.8,0.9,0.95")
    grid.add_argument("--max-length", type=int, default=256)
    grid.add_argument("--no-features", action="store_true")
    grid.add_argument("--allow-heldout", action="store_true")
    add_common(grid)
    grid.set_defaults(handler=_cmd_grid)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(parser.format_usage(), end="", file=sys.stderr)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.handler(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except FileNotFoundError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except Exception as exc:  # training and generation failures
        logger.debug("runtime failure", exc_info=True)
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
