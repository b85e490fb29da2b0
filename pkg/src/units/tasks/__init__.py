from __future__ import annotations

from .analysis import prompt_similarity
from .anomaly import fit_anomaly_threshold
from .evaluation import MetricRow, eval_masks, evaluate_task, fit_task_threshold
from .losses import (
    PretrainLoss,
    anomaly_loss,
    classify_loss,
    forecast_loss,
    impute_loss,
    pretrain_loss,
    task_loss,
)
from .pipelines import (
    as_batch,
    classify,
    classify_batch,
    detect_anomalies,
    forecast,
    impute,
    reconstruction_errors,
    refresh_averaged_embeddings,
    zscore,
)
from .protocol import TASK_KINDS, AnomalyThreshold, TaskKind, TaskSpec

__all__ = [
    "AnomalyThreshold",
    "MetricRow",
    "PretrainLoss",
    "TASK_KINDS",
    "TaskKind",
    "TaskSpec",
    "anomaly_loss",
    "as_batch",
    "classify",
    "classify_batch",
    "classify_loss",
    "detect_anomalies",
    "eval_masks",
    "evaluate_task",
    "fit_anomaly_threshold",
    "fit_task_threshold",
    "forecast",
    "forecast_loss",
    "impute",
    "impute_loss",
    "pretrain_loss",
    "prompt_similarity",
    "reconstruction_errors",
    "refresh_averaged_embeddings",
    "task_loss",
    "zscore",
]
