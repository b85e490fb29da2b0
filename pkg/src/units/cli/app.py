from __future__ import annotations

import argparse
import logging
import sys
from collections.abc import Sequence
from pathlib import Path
from typing import Optional

from units.errors import UnitsError
from units.util.log_setup import configure_logging

from . import commands
from .run_config import RunConfig, load_run_config

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_ERROR = 2


def _common(parser: argparse.ArgumentParser, *, config: bool) -> None:
    if config:
        parser.add_argument("--config", type=Path, required=True, help="run config YAML")
        parser.add_argument("--seed", type=int, default=None, help="override the run seed")
    parser.add_argument("--out", type=Path, default=None, help="output directory")


def _inference(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--from-checkpoint", type=Path, required=True, dest="checkpoint")
    parser.add_argument("--input", type=Path, required=True, help="series CSV")
    parser.add_argument("--source", default=None, help="token set to use")
    parser.add_argument("--out", type=Path, default=Path("."), help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="units",
        description="Unified multi-task time series model: train, evaluate and run tasks.",
        epilog="Set UNITS_LOG=INFO or DEBUG for progress logs.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    _common(sub.add_parser("pretrain", help="masked-reconstruction pretraining"), config=True)
    _common(sub.add_parser("train", help="supervised multi-task training"), config=True)
    for name, text in (
        ("prompt-tune", "tune one task's tokens on a frozen checkpoint"),
        ("finetune", "fine-tune a checkpoint on one task"),
        ("eval", "score every manifest task"),
    ):
        p = sub.add_parser(name, help=text)
        _common(p, config=True)
        p.add_argument("--from-checkpoint", type=Path, default=None, dest="checkpoint")
        if name == "eval":
            p.add_argument("--split", choices=("train", "val", "test"), default="test")

    p = sub.add_parser("forecast", help="forecast past the end of a series")
    _inference(p)
    p.add_argument("--horizon-tokens", type=int, required=True)

    p = sub.add_parser("impute", help="fill masked timesteps of a series")
    _inference(p)
    p.add_argument("--mask-csv", type=Path, default=None, help="one 0/1 column per row")

    p = sub.add_parser("detect", help="flag anomalous timesteps")
    _inference(p)
    group = p.add_mutually_exclusive_group(required=True)
    group.add_argument("--anomaly-ratio", type=float, default=None)
    group.add_argument("--threshold", type=float, default=None)
    p.add_argument("--window", type=int, default=commands.DETECT_WINDOW)

    p = sub.add_parser("analyze-prompts", help="prompt-token similarity across sources")
    p.add_argument("--from-checkpoint", type=Path, required=True, dest="checkpoint")
    p.add_argument("--out", type=Path, default=Path("."), help="output directory")
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    return load_run_config(args.config, seed=args.seed, out=args.out)


def run(args: argparse.Namespace) -> None:
    command = args.command
    logger.info("running %s", command)
    if command == "pretrain":
        print(commands.cmd_pretrain(_run_config(args)))
    elif command == "train":
        print(commands.cmd_train(_run_config(args)))
    elif command == "prompt-tune":
        print(commands.cmd_prompt_tune(_run_config(args), args.checkpoint))
    elif command == "finetune":
        print(commands.cmd_finetune(_run_config(args), args.checkpoint))
    elif command == "eval":
        rows = commands.cmd_eval(_run_config(args), args.checkpoint, split=args.split)
        for row in rows:
            print(f"{row.task}\t{row.split}\t{row.metric}\t{row.value:.6g}")
    elif command == "forecast":
        print(
            commands.cmd_forecast(
                args.checkpoint,
                args.input,
                args.out,
                horizon_tokens=args.horizon_tokens,
                source=args.source,
            )
        )
    elif command == "impute":
        print(
            commands.cmd_impute(
                args.checkpoint, args.input, args.out, mask_csv=args.mask_csv, source=args.source
            )
        )
    elif command == "detect":
        print(
            commands.cmd_detect(
                args.checkpoint,
                args.input,
                args.out,
                anomaly_ratio=args.anomaly_ratio,
                threshold=args.threshold,
                source=args.source,
                window=args.window,
            )
        )
    elif command == "analyze-prompts":
        print(commands.cmd_analyze_prompts(args.checkpoint, args.out))


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        run(args)
    except (UnitsError, FileNotFoundError) as exc:
        logger.error("%s failed: %s", args.command, exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_ERROR
    return EXIT_OK
