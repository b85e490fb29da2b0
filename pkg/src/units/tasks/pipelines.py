"""Inference pipelines: series in, predictions out.

Each pipeline is a single forward pass through the shared model, except anomaly scoring,
which takes one pass per masking phase. The `*_output` helpers return tape-aware tensors
and are what the training losses are built on; the public functions take NumPy arrays
shaped (t, v) or (B, t, v) and return arrays.
"""

from __future__ import annotations

import math
from collections.abc import Iterator
from typing import Optional

import numpy as np

from units.errors import ContractError, DimensionError
from units.model import (
    ClassEmbeddings,
    UniTSModel,
    assemble_anomaly,
    assemble_classify,
    assemble_forecast,
    assemble_impute,
    average_class_embeddings,
    class_distances,
    cls_tower,
    gen_tower,
)
from units.tensor import Tensor

from .protocol import AnomalyThreshold

STD_FLOOR = 1e-8
INFERENCE_CHUNK = 64
ANOMALY_PHASES = 2


def as_batch(x: np.ndarray) -> tuple[np.ndarray, bool]:
    """Return `x` as (B, t, v) plus whether a batch axis was added."""

    arr = np.asarray(x, dtype=float)
    if arr.ndim == 2:
        return arr[None], True
    if arr.ndim != 3:
        raise DimensionError(f"expected a (t, v) or (B, t, v) series, got {arr.shape}")
    return arr, False


def zscore(
    x: np.ndarray, missing: Optional[np.ndarray] = None
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per-sample, per-variable z-score over time, ignoring `missing` (B, t) timesteps."""

    observed = np.ones(x.shape[:2], dtype=bool) if missing is None else ~missing
    weight = observed[..., None].astype(x.dtype)
    count = np.maximum(weight.sum(axis=1, keepdims=True), 1.0)
    values = np.where(observed[..., None], x, 0.0)
    mean = values.sum(axis=1, keepdims=True) / count
    var = (((values - mean) * weight) ** 2).sum(axis=1, keepdims=True) / count
    std = np.sqrt(var)
    std = np.where(std < STD_FLOOR, 1.0, std)
    return np.where(observed[..., None], (values - mean) / std, 0.0), mean, std


def _chunks(n: int, size: int = INFERENCE_CHUNK) -> Iterator[slice]:
    for start in range(0, n, size):
        yield slice(start, min(n, start + size))


def _check_vars(model: UniTSModel, source: str, x: np.ndarray) -> None:
    expected = model.token_set(source).n_vars
    if x.shape[-1] != expected:
        raise DimensionError(
            f"source {source!r} expects {expected} variables, the input has {x.shape[-1]}"
        )


# -- tensor-level forward passes -----------------------------------------------------------


def forecast_output(
    model: UniTSModel, x: np.ndarray, source: str, horizon_tokens: int
) -> Tensor:
    """(B, f·k, v) forecast from one pass with f replicated GEN tokens."""

    ts = model.token_set(source)
    tokens = assemble_forecast(model.sample_tokens(x), ts, horizon_tokens)
    return gen_tower(model.encode(tokens), model.gen_tower, "gen")


def classify_tokens(model: UniTSModel, x: np.ndarray, source: str) -> Tensor:
    """(B, 1, v, d) CLS tokens after the CLS tower."""

    ts = model.token_set(source)
    tokens = assemble_classify(model.sample_tokens(x), ts)
    return cls_tower(model.encode(tokens), model.cls_tower)


def token_missing(missing: np.ndarray, patch_size: int) -> np.ndarray:
    """A token is missing when any timestep inside its patch is missing; (B, t) -> (B, s)."""

    b, t = missing.shape
    s = math.ceil(t / patch_size)
    padded = np.zeros((b, s * patch_size), dtype=bool)
    padded[:, :t] = missing
    return padded.reshape(b, s, patch_size).any(axis=2)


def impute_output(
    model: UniTSModel, x: np.ndarray, source: str, missing_tokens: np.ndarray
) -> Tensor:
    """(B, t, v) reconstruction with GEN tokens substituted at `missing_tokens` (B, s)."""

    ts = model.token_set(source)
    tokens = assemble_impute(model.sample_tokens(x), ts, missing_tokens)
    return gen_tower(model.encode(tokens), model.gen_tower, "sample", horizon=x.shape[1])


def reconstruct_output(
    model: UniTSModel, x: np.ndarray, source: str, hidden: Optional[np.ndarray] = None
) -> Tensor:
    """(B, t, v) reconstruction of the sample.

    Without `hidden` the layout is [prompt | sample]. With a (B, s) token mask the hidden
    sample rows are replaced by the GEN token first, so their values never reach their own
    reconstruction.
    """

    if hidden is not None:
        return impute_output(model, x, source, hidden)
    ts = model.token_set(source)
    tokens = assemble_anomaly(model.sample_tokens(x), ts)
    return gen_tower(model.encode(tokens), model.gen_tower, "sample", horizon=x.shape[1])


def phase_masks(n_tokens: int, phases: int = ANOMALY_PHASES) -> np.ndarray:
    """Token masks that hide every `phases`-th token; together they hide each token once.

    Row j hides the tokens whose index is j modulo `phases`. Empty rows are left out, so a
    one-token sample gets the single mask [True].
    """

    index = np.arange(n_tokens)
    masks = index[None, :] % phases == np.arange(phases)[:, None]
    return masks[masks.any(axis=1)]


def hidden_steps(hidden: np.ndarray, patch_size: int, length: int) -> np.ndarray:
    """Expand a (B, s) token mask to the (B, t) timesteps the tokens cover."""

    return np.repeat(hidden, patch_size, axis=1)[:, :length]


# -- public pipelines ----------------------------------------------------------------------


def forecast(
    model: UniTSModel,
    x: np.ndarray,
    horizon_tokens: int,
    *,
    source: str,
    normalize: bool = True,
) -> np.ndarray:
    """Forecast f·k steps past the end of `x` in one forward pass per chunk."""

    if horizon_tokens < 1:
        raise ContractError(f"forecast needs horizon_tokens >= 1, got {horizon_tokens}")
    xb, squeeze = as_batch(x)
    _check_vars(model, source, xb)
    out = np.empty((xb.shape[0], horizon_tokens * model.config.patch_size, xb.shape[2]))
    for part in _chunks(xb.shape[0]):
        chunk = xb[part]
        if normalize:
            normed, mean, std = zscore(chunk)
            out[part] = forecast_output(model, normed, source, horizon_tokens).data * std + mean
        else:
            out[part] = forecast_output(model, chunk, source, horizon_tokens).data
    return out[0] if squeeze else out


def classify_batch(
    model: UniTSModel, x: np.ndarray, *, task: str, source: Optional[str] = None
) -> tuple[np.ndarray, np.ndarray]:
    """Predicted classes (B,) and squared distances to every class embedding (B, C)."""

    xb, _ = as_batch(x)
    source = source or task
    _check_vars(model, source, xb)
    emb = model.class_embeddings(task)
    distances = np.empty((xb.shape[0], emb.n_classes))
    for part in _chunks(xb.shape[0]):
        tokens = classify_tokens(model, xb[part], source).data
        distances[part] = [class_distances(tok[0], emb.values) for tok in tokens]
    return np.argmin(distances, axis=1), distances


def classify(
    model: UniTSModel, x: np.ndarray, *, task: str, source: Optional[str] = None
) -> tuple[int, np.ndarray]:
    """Nearest class embedding to the CLS output of one (t, v) sample, with all distances."""

    x = np.asarray(x)
    if x.ndim != 2:
        raise DimensionError(f"classify takes one (t, v) sample, got {x.shape}")
    labels, distances = classify_batch(model, x, task=task, source=source)
    return int(labels[0]), distances[0]


def impute(
    model: UniTSModel,
    x: np.ndarray,
    missing: np.ndarray,
    *,
    source: str,
    normalize: bool = True,
) -> np.ndarray:
    """Fill missing timesteps; observed timesteps are returned exactly as given.

    `missing` is a per-timestep boolean mask, (t,) for one series or (B, t).
    """

    xb, squeeze = as_batch(x)
    _check_vars(model, source, xb)
    mask = np.asarray(missing, dtype=bool)
    if mask.ndim == 1 and mask.shape == xb.shape[1:2]:
        mask = np.broadcast_to(mask, xb.shape[:2])
    if mask.shape != xb.shape[:2]:
        raise DimensionError(f"missing mask {mask.shape} does not match series {xb.shape[:2]}")
    if mask.all(axis=1).any():
        raise ContractError("cannot impute a series whose timesteps are all missing")

    filled = np.array(xb, copy=True)
    for part in _chunks(xb.shape[0]):
        chunk, chunk_mask = xb[part], mask[part]
        if not chunk_mask.any():
            continue
        if normalize:
            normed, mean, std = zscore(chunk, chunk_mask)
        else:
            normed = np.where(chunk_mask[..., None], 0.0, chunk)
            mean, std = 0.0, 1.0
        missing_tokens = token_missing(chunk_mask, model.config.patch_size)
        recon = impute_output(model, normed, source, missing_tokens).data * std + mean
        filled[part] = np.where(chunk_mask[..., None], recon, chunk)
    return filled[0] if squeeze else filled


def reconstruction_errors(
    model: UniTSModel, series: np.ndarray, *, source: str, masked: bool = True
) -> np.ndarray:
    """Per-timestep squared reconstruction error averaged over variables; (t,) or (B, t).

    By default each patch is reconstructed in a pass that hides it behind the GEN token
    (one pass per `phase_masks` row), so an outlier cannot be copied through to its own
    reconstruction. `masked=False` reads one unmasked [prompt | sample] pass instead.
    """

    xb, squeeze = as_batch(series)
    _check_vars(model, source, xb)
    b, t, _ = xb.shape
    k = model.config.patch_size
    phases = phase_masks(math.ceil(t / k))
    errors = np.empty((b, t))
    for part in _chunks(b):
        chunk = xb[part]
        if not masked:
            recon = reconstruct_output(model, chunk, source).data
        else:
            recon = np.empty_like(chunk)
            for row in phases:
                hidden = np.broadcast_to(row, (chunk.shape[0], row.size))
                steps = hidden_steps(hidden, k, t)
                recon[steps] = reconstruct_output(model, chunk, source, hidden).data[steps]
        errors[part] = np.mean((chunk - recon) ** 2, axis=2)
    return errors[0] if squeeze else errors


def detect_anomalies(
    model: UniTSModel, series: np.ndarray, threshold: AnomalyThreshold, *, source: str
) -> np.ndarray:
    """Flag timesteps whose reconstruction error is strictly above the threshold."""

    return threshold.flag(reconstruction_errors(model, series, source=source))


def refresh_averaged_embeddings(
    model: UniTSModel, task: str, inputs: np.ndarray, labels: np.ndarray, *, source: str
) -> ClassEmbeddings:
    """Set a task's class embeddings to the per-class mean CLS output over `inputs`."""

    xb, _ = as_batch(inputs)
    emb = model.class_embeddings(task)
    tokens = np.concatenate(
        [classify_tokens(model, xb[part], source).data for part in _chunks(xb.shape[0])]
    )
    return model.set_class_embeddings(
        task, average_class_embeddings(tokens, labels, emb.n_classes)
    )
