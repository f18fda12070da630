"""Command-line interface.

Subcommands:
    gen-data  Write a synthetic dataset with train/val/test splits
    train     Train on a dataset, writing CSV logs and checkpoints
    eval      Score a checkpoint on a split and print the metrics table
    plot      Render loss, validation and study charts as PNG
    study     Run the paired granularity study

Exit codes: 0 on success, 1 on usage errors, 2 on runtime failures.
"""

import argparse
import logging
import sys
import types
from collections.abc import Callable, Sequence
from pathlib import Path
from typing import Any, Literal, NoReturn, Union, get_args, get_origin

from .checkpoint import load_checkpoint
from .config import Config, load_config
from .data.granularity import parse_ratios
from .data.io import build_dataset, manifest_path, read_manifest, read_partition
from .evaluation import (
    collect_ground_truth,
    evaluate,
    format_result,
    write_detections,
    write_eval_csv,
)
from .exceptions import DatasetError, OmniDetectionError
from .experiments import STUDY_FILE, read_study_csv, run_granularity_study, summarize_study
from .plotting import plot_eval_curve, plot_granularity_comparison, plot_loss_curves, read_log
from .trainer import EVAL_LOG, LOSS_LOG, OmniSupervisedTrainer, build_trainer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_FAILURE = 2


class _ArgumentParser(argparse.ArgumentParser):
    """ArgumentParser that exits with status 1 on usage errors."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _ratios(text: str) -> tuple[float, float, float]:
    try:
        return parse_ratios(text)
    except DatasetError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _float_list(text: str) -> tuple[float, ...]:
    return tuple(float(part) for part in text.split(","))


def _converter(annotation: Any) -> tuple[Callable[[str], Any], tuple[str, ...] | None]:
    """Flag parser and choices for a Config field annotation."""
    origin = get_origin(annotation)
    if origin in (Union, types.UnionType):
        annotation = next(a for a in get_args(annotation) if a is not type(None))
        origin = get_origin(annotation)
    if origin is Literal:
        return str, tuple(get_args(annotation))
    if origin is tuple:
        item = get_args(annotation)[0]
        return (lambda text: tuple(item(p.strip()) for p in text.split(",") if p.strip())), None
    return annotation, None


def add_config_flags(parser: argparse.ArgumentParser) -> None:
    """Add one ``--field-name`` flag per Config field; unset flags stay None."""
    group = parser.add_argument_group("config overrides")
    for name, field in Config.model_fields.items():
        if name == "granularity":
            convert, choices = _ratios, None
        else:
            convert, choices = _converter(field.annotation)
        group.add_argument(
            f"--{name.replace('_', '-')}",
            dest=name,
            type=convert,
            choices=choices,
            default=None,
            metavar=None if choices else name.upper(),
            help=field.description,
        )


def config_overrides(args: argparse.Namespace) -> dict[str, Any]:
    return {name: getattr(args, name, None) for name in Config.model_fields}


def build_parser() -> argparse.ArgumentParser:
    parser = _ArgumentParser(prog="omnidet", description=__doc__.splitlines()[0])
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=("DEBUG", "INFO", "WARNING", "ERROR"),
        help="Logging level (default: INFO)",
    )
    commands = parser.add_subparsers(dest="command", required=True, metavar="COMMAND")

    gen = commands.add_parser("gen-data", help="Write a synthetic dataset")
    gen.add_argument("--out", type=Path, required=True, help="Dataset directory")
    gen.add_argument("--seed", type=int, default=0)
    gen.add_argument("--n", type=int, default=200, help="Number of images")
    gen.add_argument("--image-size", type=int, default=128)
    gen.add_argument("--num-classes", type=int, default=9)
    gen.add_argument(
        "--fractions",
        type=_float_list,
        default=(0.6, 0.2, 0.2),
        help="train,val,test fractions (default: 0.6,0.2,0.2)",
    )
    gen.set_defaults(handler=cmd_gen_data)

    train = commands.add_parser("train", help="Train a model")
    train.add_argument("--data", type=Path, required=True, help="Dataset directory")
    train.add_argument("--config", type=Path, help="YAML or JSON config file")
    train.add_argument("--resume", type=Path, help="Checkpoint to continue from")
    add_config_flags(train)
    train.set_defaults(handler=cmd_train)

    ev = commands.add_parser("eval", help="Evaluate a checkpoint")
    ev.add_argument("--data", type=Path, required=True, help="Dataset directory")
    ev.add_argument("--checkpoint", type=Path, help="Checkpoint (default: untrained model)")
    ev.add_argument("--config", type=Path, help="Config of an untrained model")
    ev.add_argument("--split", default="test", choices=("train", "val", "test"))
    ev.add_argument("--manifest", type=Path, help="Manifest to score instead of --split")
    ev.add_argument("--attention-dir", type=Path, help="Export attention maps here")
    ev.add_argument("--detections", type=Path, help="Write detections as JSON lines")
    ev.add_argument("--csv", type=Path, help="Write per-class AP rows as CSV")
    ev.set_defaults(handler=cmd_eval)

    plot = commands.add_parser("plot", help="Render charts from CSV logs")
    plot.add_argument("--run", type=Path, help="Run directory with loss.csv/eval.csv")
    plot.add_argument("--study", type=Path, help="study.csv or a directory containing it")
    plot.add_argument("--out", type=Path, help="Output directory (default: <run>/plots)")
    plot.set_defaults(handler=cmd_plot)

    study = commands.add_parser("study", help="Run the granularity study")
    study.add_argument("--data", type=Path, required=True, help="Dataset directory")
    study.add_argument("--out", type=Path, required=True, help="Study directory")
    study.add_argument("--config", type=Path, help="Base config file")
    study.add_argument("--repeats", type=int, default=3)
    add_config_flags(study)
    study.set_defaults(handler=cmd_study)
    return parser


def cmd_gen_data(args: argparse.Namespace) -> int:
    manifests = build_dataset(
        args.out,
        seed=args.seed,
        n_images=args.n,
        image_size=args.image_size,
        num_classes=args.num_classes,
        fractions=args.fractions,
    )
    for split, manifest in manifests.items():
        print(f"{split}: {len(manifest)} images")
    return EXIT_OK


def cmd_train(args: argparse.Namespace) -> int:
    base = load_checkpoint(args.resume).config if args.resume is not None else None
    config = load_config(args.config, config_overrides(args), base=base)
    trainer = build_trainer(config, resume=args.resume)
    reports = trainer.fit(args.data, config.output_dir)
    if reports:
        print(f"step {trainer.step}: total loss {reports[-1].total:.4f}")
    print(f"run directory: {config.output_dir}")
    return EXIT_OK


def cmd_eval(args: argparse.Namespace) -> int:
    if args.checkpoint is not None:
        checkpoint = load_checkpoint(args.checkpoint)
        trainer = OmniSupervisedTrainer(checkpoint.config)
        trainer.restore(checkpoint, source=str(args.checkpoint))
    else:
        trainer = OmniSupervisedTrainer(load_config(args.config))
    if args.manifest is not None:
        manifest, sidecar = read_partition(args.manifest)
    else:
        manifest, sidecar = read_manifest(manifest_path(args.data, args.split)), None

    trainer.check_manifest(manifest)
    detections = trainer.detect_manifest(manifest, args.data, attention_dir=args.attention_dir)
    result = evaluate(
        detections, collect_ground_truth(manifest, sidecar), trainer.config.num_classes
    )
    print(format_result(result))
    if args.detections is not None:
        write_detections(detections, args.detections)
    if args.csv is not None:
        write_eval_csv(result, args.csv)
    return EXIT_OK


def cmd_plot(args: argparse.Namespace) -> int:
    study: Path | None = None
    if args.study is not None:
        study = args.study / STUDY_FILE if args.study.is_dir() else args.study
    out = args.out or (args.run / "plots" if args.run is not None else study.parent)
    if args.run is not None:
        plot_loss_curves(args.run / LOSS_LOG, out / "loss.png")
        eval_csv = args.run / EVAL_LOG
        if eval_csv.exists() and read_log(eval_csv).get("step"):
            plot_eval_curve(eval_csv, out / "val_map.png")
    if study is not None:
        plot_granularity_comparison(read_study_csv(study), out / "granularity.png")
    print(f"plots written to {out}")
    return EXIT_OK


def cmd_study(args: argparse.Namespace) -> int:
    config = load_config(args.config, config_overrides(args))
    results = run_granularity_study(args.data, args.out, config, repeats=args.repeats)
    maps: dict[str, list[float]] = {}
    for r in results:
        maps.setdefault(r.setting, []).append(r.result.mean_ap)
    for name, (mean, std) in summarize_study(maps).items():
        print(f"{name:>16}: mAP {100 * mean:.2f} ± {100 * std:.2f}")
    return EXIT_OK


def _exit_code(exc: SystemExit) -> int:
    if exc.code is None:
        return EXIT_OK
    return exc.code if isinstance(exc.code, int) else EXIT_USAGE


def main(argv: Sequence[str] | None = None) -> int:
    """Run the CLI and return its exit code."""
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command == "plot" and args.run is None and args.study is None:
            parser.error("plot needs --run and/or --study")
    except SystemExit as e:
        return _exit_code(e)

    logging.basicConfig(
        level=args.log_level,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return int(args.handler(args))
    except (OmniDetectionError, OSError) as e:
        logger.debug("Command failed", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
