"""Per-task evaluation rows: MSE/MAE, accuracy, or precision/recall/F1."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from units import metrics
from units.errors import ContractError, DataError
from units.model import UniTSModel, block_masks
from units.util.rng import make_rng

from .anomaly import fit_anomaly_threshold
from .pipelines import classify_batch, forecast, impute, reconstruction_errors, zscore
from .protocol import AnomalyThreshold

if TYPE_CHECKING:
    from units.data.protocol import TimeSeriesDataset

logger = logging.getLogger(__name__)

EVAL_MASK_RATIO = 0.25


@dataclass(frozen=True, slots=True)
class MetricRow:
    task: str
    kind: str
    split: str
    metric: str
    value: float


def _rows(dataset: TimeSeriesDataset, values: dict[str, float]) -> list[MetricRow]:
    return [
        MetricRow(dataset.name, dataset.kind, dataset.split, metric, float(value))
        for metric, value in values.items()
    ]


def _forecast_rows(model: UniTSModel, dataset: TimeSeriesDataset) -> list[MetricRow]:
    # errors are reported in the units of the per-sample normalized context
    spec = dataset.spec
    _, mean, std = zscore(dataset.inputs)
    pred = forecast(model, dataset.inputs, spec.horizon_tokens or 1, source=spec.source)
    truth = (dataset.targets - mean) / std
    guess = (pred - mean) / std
    return _rows(dataset, {"mse": metrics.mse(truth, guess), "mae": metrics.mae(truth, guess)})


def eval_masks(dataset: TimeSeriesDataset) -> np.ndarray:
    """The dataset's own masks, or fixed block masks drawn from its name."""

    if dataset.masks is not None:
        return dataset.masks
    rng = make_rng(0, "eval-masks", dataset.name, dataset.split)
    n, t, _ = dataset.inputs.shape
    return block_masks(rng, n, t, dataset.spec.patch_size, EVAL_MASK_RATIO)


def _impute_rows(model: UniTSModel, dataset: TimeSeriesDataset) -> list[MetricRow]:
    masks = eval_masks(dataset)
    filled = impute(model, dataset.inputs, masks, source=dataset.source)
    _, mean, std = zscore(dataset.inputs, masks)
    selected = np.broadcast_to(masks[..., None], dataset.inputs.shape)
    truth = ((dataset.inputs - mean) / std)[selected]
    guess = ((filled - mean) / std)[selected]
    return _rows(dataset, {"mse": metrics.mse(truth, guess), "mae": metrics.mae(truth, guess)})


def _classify_rows(model: UniTSModel, dataset: TimeSeriesDataset) -> list[MetricRow]:
    predicted, _ = classify_batch(
        model, dataset.inputs, task=dataset.name, source=dataset.source
    )
    return _rows(dataset, {"accuracy": metrics.accuracy(dataset.labels, predicted)})


def fit_task_threshold(
    model: UniTSModel, datasets: Sequence[TimeSeriesDataset], ratio: Optional[float] = None
) -> AnomalyThreshold:
    """Fit an anomaly threshold on errors pooled over `datasets` (e.g. train and test)."""

    if not datasets:
        raise ContractError("fitting a threshold needs at least one dataset")
    ratio = ratio if ratio is not None else datasets[0].spec.anomaly_ratio
    if ratio is None:
        raise ContractError(f"task {datasets[0].name!r} has no anomaly ratio")
    pooled = np.concatenate(
        [reconstruction_errors(model, d.inputs, source=d.source).reshape(-1) for d in datasets]
    )
    threshold = fit_anomaly_threshold(pooled, ratio)
    logger.info(
        "anomaly threshold for %s: %.6g (ratio %.4f, %d errors)",
        datasets[0].name,
        threshold.threshold,
        ratio,
        threshold.n_errors,
    )
    return threshold


def _anomaly_rows(
    model: UniTSModel, dataset: TimeSeriesDataset, threshold: Optional[AnomalyThreshold]
) -> list[MetricRow]:
    if dataset.point_labels is None:
        raise DataError(f"anomaly dataset {dataset.name!r} has no point labels to score")
    errors = reconstruction_errors(model, dataset.inputs, source=dataset.source)
    if threshold is None:
        threshold = fit_anomaly_threshold(errors, dataset.spec.anomaly_ratio or 0.0)
    scores = metrics.detection_scores(dataset.point_labels, threshold.flag(errors))
    return _rows(
        dataset,
        {
            "precision": scores.precision,
            "recall": scores.recall,
            "f1": scores.f1,
            "threshold": threshold.threshold,
        },
    )


def evaluate_task(
    model: UniTSModel,
    dataset: TimeSeriesDataset,
    *,
    threshold: Optional[AnomalyThreshold] = None,
) -> list[MetricRow]:
    """Score one dataset with the metrics of its task kind.

    Anomaly datasets use `threshold` when given, otherwise a threshold fit on the
    dataset's own errors.
    """

    if len(dataset) == 0:
        raise DataError(f"dataset {dataset.name!r} ({dataset.split}) is empty")
    kind = dataset.kind
    if kind == "forecast":
        rows = _forecast_rows(model, dataset)
    elif kind == "impute":
        rows = _impute_rows(model, dataset)
    elif kind == "classify":
        rows = _classify_rows(model, dataset)
    elif kind == "anomaly":
        rows = _anomaly_rows(model, dataset, threshold)
    else:
        raise ContractError(f"no evaluation for task kind {kind!r}")
    for row in rows:
        logger.debug("%s/%s %s = %.6g", row.task, row.split, row.metric, row.value)
    return rows
