"""The work behind each subcommand; argument parsing lives in `units.cli.app`."""

from __future__ import annotations

import logging
from collections.abc import Sequence
from dataclasses import asdict, replace
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from units.checkpoint import load_checkpoint, save_checkpoint
from units.data import (
    DatasetSplits,
    TimeSeriesDataset,
    load_datasets,
    load_manifest,
    read_series_csv,
    write_series_csv,
)
from units.data.csv_loader import numeric_columns, read_table
from units.errors import CheckpointError, ConfigError, ContractError, DimensionError
from units.model import UniTSModel
from units.tasks import (
    AnomalyThreshold,
    MetricRow,
    evaluate_task,
    fit_anomaly_threshold,
    fit_task_threshold,
    forecast,
    impute,
    prompt_similarity,
    reconstruction_errors,
)
from units.training import MetricRecord, Regime, Trainer

from .run_config import RunConfig, write_resolved

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "model.unts"
METRICS_NAME = "metrics.csv"
EVAL_NAME = "eval.csv"
DETECT_WINDOW = 96


def _write_frame(frame: pd.DataFrame, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False, lineterminator="\n")
    return path


def write_metrics(records: Sequence[MetricRecord], path: Path) -> Path:
    frame = pd.DataFrame(
        [asdict(r) for r in records], columns=["step", "dataset", "loss", "lr"]
    )
    return _write_frame(frame, path)


def _splits(config: RunConfig) -> dict[str, DatasetSplits]:
    manifest = load_manifest(config.manifest)
    return load_datasets(manifest, patch_size=config.model.patch_size)


def _train(
    config: RunConfig,
    model: UniTSModel,
    regime: Regime,
    splits: dict[str, DatasetSplits],
) -> Path:
    training = replace(config.training, regime=regime)
    trainer = Trainer(model, training, {name: s.train for name, s in splits.items()})
    records = trainer.run()

    config.out.mkdir(parents=True, exist_ok=True)
    write_resolved(replace(config, training=training))
    write_metrics(records, config.out / METRICS_NAME)
    path = save_checkpoint(config.out / CHECKPOINT_NAME, model, config.seed)
    state = trainer.state()
    logger.info(
        "%s finished: %d steps, loss %.6f -> %.6f",
        regime,
        state.step,
        state.first_loss or 0.0,
        state.last_loss or 0.0,
    )
    return path


def cmd_pretrain(config: RunConfig) -> Path:
    """Unified masked-reconstruction pretraining of a fresh model on every dataset."""

    splits = _splits(config)
    model = UniTSModel(config.model, with_pretrain_tower=True)
    return _train(config, model, "pretrain", splits)


def cmd_train(config: RunConfig) -> Path:
    """Supervised multi-task training (or `single_task` when the config asks for it)."""

    regime = config.training.regime
    if regime not in ("supervised", "single_task"):
        raise ConfigError(f"`train` runs the supervised or single_task regime, not {regime}")
    splits = _splits(config)
    model = UniTSModel(config.model, with_pretrain_tower=False)
    return _train(config, model, regime, splits)


def _from_checkpoint(config: RunConfig, checkpoint: Optional[Path], command: str) -> UniTSModel:
    if checkpoint is None:
        raise ConfigError(f"`{command}` needs --from-checkpoint")
    model = load_checkpoint(checkpoint, expect=config.model).model
    model.drop_pretrain_tower()
    return model


def cmd_prompt_tune(config: RunConfig, checkpoint: Optional[Path]) -> Path:
    """Tune only the target task's tokens on top of a frozen checkpoint."""

    model = _from_checkpoint(config, checkpoint, "prompt-tune")
    return _train(config, model, "prompt_tune", _splits(config))


def cmd_finetune(config: RunConfig, checkpoint: Optional[Path]) -> Path:
    """Train every parameter on (a `data_ratio` share of) the target task from a checkpoint."""

    model = _from_checkpoint(config, checkpoint, "finetune")
    return _train(config, model, "finetune", _splits(config))


def _check_covers(model: UniTSModel, dataset: TimeSeriesDataset) -> None:
    try:
        ts = model.token_set(dataset.source)
    except KeyError:
        raise CheckpointError(
            f"the checkpoint has no tokens for source {dataset.source!r} "
            f"(it has {', '.join(model.sources()) or 'none'})"
        ) from None
    if ts.n_vars != dataset.spec.n_vars:
        raise CheckpointError(
            f"task {dataset.name!r} has {dataset.spec.n_vars} variables, the checkpoint's "
            f"tokens expect {ts.n_vars}"
        )
    if dataset.kind == "classify" and dataset.name not in model.tasks():
        raise CheckpointError(f"the checkpoint has no class embeddings for {dataset.name!r}")


def cmd_eval(
    config: RunConfig, checkpoint: Optional[Path], *, split: str = "test"
) -> list[MetricRow]:
    """Score every manifest task on `split` and write the rows to `<out>/eval.csv`.

    Anomaly thresholds are fit on errors pooled over the training and evaluated splits.
    """

    if checkpoint is None:
        raise ConfigError("`eval` needs --from-checkpoint")
    model = load_checkpoint(checkpoint, expect=config.model).model
    splits = _splits(config)
    rows: list[MetricRow] = []
    for name, parts in splits.items():
        dataset = parts.get(split)  # type: ignore[arg-type]
        _check_covers(model, dataset)
        threshold = None
        if dataset.kind == "anomaly":
            pool = [parts.train] if dataset is parts.train else [parts.train, dataset]
            threshold = fit_task_threshold(model, pool)
        rows.extend(evaluate_task(model, dataset, threshold=threshold))
    frame = pd.DataFrame([asdict(r) for r in rows])
    _write_frame(frame, config.out / EVAL_NAME)
    return rows


# -- inference commands --------------------------------------------------------------------


def _source(model: UniTSModel, source: Optional[str]) -> str:
    if source:
        model.token_set(source)
        return source
    sources = model.sources()
    if len(sources) != 1:
        raise ConfigError(f"choose a --source among {', '.join(sources)}")
    return sources[0]


def _series(model: UniTSModel, source: str, path: Path) -> tuple[np.ndarray, list[str]]:
    values, columns = read_series_csv(path)
    expected = model.token_set(source).n_vars
    if values.shape[1] != expected:
        raise DimensionError(
            f"{path}: source {source!r} expects {expected} variables, the file has "
            f"{values.shape[1]}"
        )
    return values, columns


def cmd_forecast(
    checkpoint: Path,
    input_csv: Path,
    out: Path,
    *,
    horizon_tokens: int,
    source: Optional[str] = None,
) -> Path:
    """Forecast `horizon_tokens · patch_size` rows past the end of the input file."""

    model = load_checkpoint(checkpoint).model
    source = _source(model, source)
    values, columns = _series(model, source, input_csv)
    context = values[-model.config.patch_size * _max_context(model, horizon_tokens) :]
    prediction = forecast(model, context, horizon_tokens, source=source)
    return write_series_csv(out / "forecast.csv", prediction, columns)


def _max_context(model: UniTSModel, horizon_tokens: int) -> int:
    # sample tokens that still fit the positional table next to prompt and GEN tokens
    config = model.config
    room = config.max_positions - config.n_prompt_tokens - horizon_tokens
    if room < 1:
        raise ConfigError(
            f"{horizon_tokens} GEN tokens leave no room for context in a "
            f"{config.max_positions}-position table"
        )
    return room


def read_mask_csv(path: Path, length: int) -> np.ndarray:
    """A one-column CSV of 0/1 flags, one row per timestep; nonzero means missing."""

    frame = read_table(path)
    if len(frame.columns) != 1:
        raise ConfigError(f"{path}: a mask file has exactly one column")
    flags = numeric_columns(frame, list(frame.columns), path)[:, 0] != 0
    if flags.shape != (length,):
        raise DimensionError(f"{path}: {flags.size} mask rows for a {length}-row series")
    return flags


def cmd_impute(
    checkpoint: Path,
    input_csv: Path,
    out: Path,
    *,
    mask_csv: Optional[Path] = None,
    source: Optional[str] = None,
) -> Path:
    """Fill the masked timesteps of a series; without a mask the input is echoed."""

    model = load_checkpoint(checkpoint).model
    source = _source(model, source)
    values, columns = _series(model, source, input_csv)
    if mask_csv is None:
        missing = np.zeros(values.shape[0], dtype=bool)
    else:
        missing = read_mask_csv(mask_csv, values.shape[0])
    filled = values if not missing.any() else impute(model, values, missing, source=source)
    return write_series_csv(out / "imputed.csv", filled, columns)


def _windows(length: int, size: int) -> list[slice]:
    return [slice(start, min(length, start + size)) for start in range(0, length, size)]


def cmd_detect(
    checkpoint: Path,
    input_csv: Path,
    out: Path,
    *,
    anomaly_ratio: Optional[float] = None,
    threshold: Optional[float] = None,
    source: Optional[str] = None,
    window: int = DETECT_WINDOW,
) -> Path:
    """Flag anomalous rows of a series.

    Errors are computed window by window; the threshold is given directly or fit on the
    file's own pooled errors at `anomaly_ratio`.
    """

    if (anomaly_ratio is None) == (threshold is None):
        raise ConfigError("detect needs exactly one of --anomaly-ratio or --threshold")
    model = load_checkpoint(checkpoint).model
    source = _source(model, source)
    values, _ = _series(model, source, input_csv)
    errors = np.concatenate(
        [
            reconstruction_errors(model, values[part], source=source)
            for part in _windows(values.shape[0], window)
        ]
    )
    if threshold is not None:
        if threshold < 0:
            raise ContractError(f"threshold must be >= 0, got {threshold}")
        fitted = AnomalyThreshold(float(threshold), 0.0, 0)
    else:
        fitted = fit_anomaly_threshold(errors, float(anomaly_ratio))
    flags = fitted.flag(errors)
    frame = pd.DataFrame({"anomaly": flags.astype(int), "error": errors})
    logger.info(
        "flagged %d of %d rows (threshold %.6g)", int(flags.sum()), flags.size, fitted.threshold
    )
    return _write_frame(frame, out / "anomalies.csv")


def cmd_analyze_prompts(checkpoint: Path, out: Path) -> Path:
    """Write the prompt-token cosine similarity matrix of every token set."""

    model = load_checkpoint(checkpoint).model
    names, matrix = prompt_similarity(model)
    frame = pd.DataFrame(matrix, columns=names)
    frame.insert(0, "source", names)
    return _write_frame(frame, out / "prompt_similarity.csv")
