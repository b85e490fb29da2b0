from __future__ import annotations

from .app import build_parser, main
from .commands import (
    cmd_analyze_prompts,
    cmd_detect,
    cmd_eval,
    cmd_finetune,
    cmd_forecast,
    cmd_impute,
    cmd_pretrain,
    cmd_prompt_tune,
    cmd_train,
)
from .run_config import RunConfig, load_run_config, parse_run_config, write_resolved

__all__ = [
    "RunConfig",
    "build_parser",
    "cmd_analyze_prompts",
    "cmd_detect",
    "cmd_eval",
    "cmd_finetune",
    "cmd_forecast",
    "cmd_impute",
    "cmd_pretrain",
    "cmd_prompt_tune",
    "cmd_train",
    "load_run_config",
    "main",
    "parse_run_config",
    "write_resolved",
]
