from __future__ import annotations

from .config import REGIMES, TARGETED_REGIMES, Regime, Schedule, TrainingConfig
from .optimizer import OptimizerState, optimizer_step
from .regimes import apply_regime, audit_frozen, frozen_checksum, frozen_predicate, prepare_model
from .sampling import sample_dataset
from .schedule import lr_at
from .steps import pretrain_step, prompt_tune_step, supervised_step
from .trainer import MetricRecord, Trainer, TrainerState

__all__ = [
    "MetricRecord",
    "OptimizerState",
    "REGIMES",
    "Regime",
    "Schedule",
    "TARGETED_REGIMES",
    "Trainer",
    "TrainerState",
    "TrainingConfig",
    "apply_regime",
    "audit_frozen",
    "frozen_checksum",
    "frozen_predicate",
    "lr_at",
    "optimizer_step",
    "prepare_model",
    "pretrain_step",
    "prompt_tune_step",
    "sample_dataset",
    "supervised_step",
]
