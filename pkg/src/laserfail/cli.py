"""Command line driver.

    laserfail generate   [--samples-per-mode N]
    laserfail preprocess
    laserfail train --model {lstm,knn,logreg,rf} [--epochs N]
    laserfail evaluate [--threshold-baseline] [CHECKPOINT ...]
    laserfail compare    (all of the above in one go)

Global options ``--config PATH``, ``--seed U64`` and ``--out DIR`` may appear
before or after the subcommand. ``LASERFAIL_LOG_LEVEL`` sets verbosity.
Exit status: 0 success, 1 usage or configuration error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from collections import Counter
from dataclasses import replace

from . import workflow
from .config import Paths, load_config
from .degradation import ConfigError, DegradationMode
from .metrics import format_table
from .storage import CheckpointVersionError, DatasetFormatError

log = logging.getLogger("laserfail")

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _common() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=argparse.SUPPRESS, help="YAML run configuration")
    common.add_argument("--seed", type=int, default=argparse.SUPPRESS, help="master seed (unsigned 64-bit)")
    common.add_argument("--out", default=argparse.SUPPRESS, help="root directory for dataset/, models/, reports/")
    return common


def build_parser() -> argparse.ArgumentParser:
    common = _common()
    parser = _Parser(prog="laserfail", description="Laser failure-mode detection lab", parents=[common])
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    gen = sub.add_parser("generate", parents=[common], help="synthesize the degradation dataset")
    gen.add_argument("--samples-per-mode", type=int)
    sub.add_parser("preprocess", parents=[common], help="window, split and mutate the dataset")
    tr = sub.add_parser("train", parents=[common], help="train one model and write its checkpoint")
    tr.add_argument("--model", required=True, choices=workflow.MODEL_KINDS)
    tr.add_argument("--epochs", type=int, help="LSTM epoch limit")
    ev = sub.add_parser("evaluate", parents=[common], help="score checkpoints on the mutated test split")
    ev.add_argument("checkpoints", nargs="*", help="checkpoint files (default: every one in the model dir)")
    ev.add_argument("--threshold-baseline", action="store_true", help="add the rule-based threshold detector")
    cmp_ = sub.add_parser("compare", parents=[common], help="run the whole pipeline and print the comparison")
    cmp_.add_argument("--samples-per-mode", type=int)
    cmp_.add_argument("--epochs", type=int, help="LSTM epoch limit")
    return parser


def _resolve_config(args):
    cfg = load_config(getattr(args, "config", None))
    if hasattr(args, "seed"):
        cfg = replace(cfg, seed=args.seed)
    if hasattr(args, "out"):
        cfg = replace(cfg, paths=Paths.under(args.out))
    if getattr(args, "samples_per_mode", None) is not None:
        cfg = replace(cfg, generation=replace(cfg.generation, samples_per_mode=args.samples_per_mode))
    if getattr(args, "epochs", None) is not None:
        cfg = replace(cfg, training=replace(cfg.training, epochs=args.epochs))
    # Re-run validation on the overridden copy before anything touches disk.
    return replace(cfg)


def _mode_counts(labels) -> str:
    counts = Counter(int(v) for v in labels)
    return ", ".join(f"{m.name.lower()}={counts.get(int(m), 0)}" for m in DegradationMode)


def run(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _resolve_config(args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, ValueError, TypeError) as exc:
        print(f"laserfail: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE

    try:
        if args.command == "generate":
            samples = workflow.generate(cfg)
            print(f"wrote {len(samples)} samples to {cfg.paths.dataset_dir}")
            print("per mode:", _mode_counts(s.mode for s in samples))
        elif args.command == "preprocess":
            split = workflow.preprocess(cfg)
            print(f"split counts: train={len(split.train)} val={len(split.validation)} test={len(split.test)}")
            for part in ("train", "validation", "test"):
                print(f"  {part}: {_mode_counts(split.labels(part))}")
            print(f"mutated test windows: {sum(w.mutated for w in split.test)}")
        elif args.command == "train":
            path = workflow.train_and_save(args.model, cfg)
            print(f"wrote checkpoint {path}")
        elif args.command == "evaluate":
            evaluations = workflow.evaluate(cfg, args.checkpoints or None, args.threshold_baseline)
            print(format_table(evaluations))
            print(f"reports written to {cfg.paths.report_dir}")
        elif args.command == "compare":
            evaluations = workflow.run_all(cfg)
            print(format_table(evaluations))
            print(f"reports written to {cfg.paths.report_dir}")
    except CheckpointVersionError as exc:
        print(f"laserfail: refusing checkpoint: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, DatasetFormatError, RuntimeError, ValueError, KeyError) as exc:
        print(f"laserfail: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def main(argv=None) -> None:
    level = os.environ.get("LASERFAIL_LOG_LEVEL", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(levelname)s %(name)s: %(message)s")
    sys.exit(run(argv))
