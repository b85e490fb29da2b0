"""Training objectives built on the tensor-level pipeline passes.

Every loss is mean-reduced over the batch and its elements, so a micro-batch loss scaled
by its share of the effective batch accumulates to the loss of the concatenated batch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import TYPE_CHECKING, Optional

import numpy as np

from units.errors import ContractError, DataError
from units.model import (
    SegmentedTokens,
    Spans,
    UniTSModel,
    assemble_impute,
    block_masks,
    class_logits,
    cls_tower,
    draw_scheme,
    draw_truncation,
    gen_tower,
    plan_mask,
)
from units.tensor import Tensor, ops

from .pipelines import (
    classify_tokens,
    forecast_output,
    hidden_steps,
    impute_output,
    phase_masks,
    reconstruct_output,
    token_missing,
    zscore,
)
from .protocol import TaskSpec

if TYPE_CHECKING:
    from units.data.protocol import Batch

IMPUTE_TRAIN_RATIO = 0.25


@dataclass(frozen=True, slots=True)
class PretrainLoss:
    """Total pretraining loss plus the values of its two reconstruction terms."""

    total: Tensor
    gen_term: float
    cls_term: float


def _target(values: np.ndarray, like: Tensor) -> Tensor:
    return Tensor(values, dtype=like.dtype)


def forecast_loss(model: UniTSModel, spec: TaskSpec, batch: Batch) -> Tensor:
    if batch.targets is None:
        raise DataError(f"forecast batch of {spec.name!r} has no targets")
    normed, mean, std = zscore(batch.inputs)
    pred = forecast_output(model, normed, spec.source, spec.horizon_tokens or 1)
    return ops.mse(pred, _target((batch.targets - mean) / std, pred))


def classify_loss(model: UniTSModel, spec: TaskSpec, batch: Batch) -> Tensor:
    if batch.labels is None:
        raise DataError(f"classify batch of {spec.name!r} has no labels")
    tokens = classify_tokens(model, batch.inputs, spec.source)
    logits = class_logits(tokens, model.class_embeddings(spec.name).values)
    return ops.cross_entropy(logits, batch.labels)


def impute_loss(
    model: UniTSModel, spec: TaskSpec, batch: Batch, rng: np.random.Generator
) -> Tensor:
    """MSE over freshly drawn whole-patch masks (a quarter of the patches per sample)."""

    b, t, v = batch.inputs.shape
    masks = block_masks(rng, b, t, spec.patch_size, IMPUTE_TRAIN_RATIO)
    normed, mean, std = zscore(batch.inputs, masks)
    target = (batch.inputs - mean) / std
    recon = impute_output(model, normed, spec.source, token_missing(masks, spec.patch_size))
    return ops.masked_mse(
        recon, _target(target, recon), np.broadcast_to(masks[..., None], (b, t, v))
    )


def anomaly_loss(
    model: UniTSModel, spec: TaskSpec, batch: Batch, rng: np.random.Generator
) -> Tensor:
    """MSE over the patches hidden behind the GEN token, one random phase per sample.

    Scoring hides the same phases, so training never rewards copying a patch through.
    """

    b, t, v = batch.inputs.shape
    phases = phase_masks(math.ceil(t / spec.patch_size))
    hidden = phases[rng.integers(len(phases), size=b)]
    recon = reconstruct_output(model, batch.inputs, spec.source, hidden)
    steps = hidden_steps(hidden, spec.patch_size, t)
    return ops.masked_mse(
        recon, _target(batch.inputs, recon), np.broadcast_to(steps[..., None], (b, t, v))
    )


def task_loss(
    model: UniTSModel, spec: TaskSpec, batch: Batch, rng: np.random.Generator
) -> Tensor:
    """The supervised loss of one batch for its task kind (not yet weighted by λ)."""

    if spec.kind == "forecast":
        return forecast_loss(model, spec, batch)
    if spec.kind == "classify":
        return classify_loss(model, spec, batch)
    if spec.kind == "impute":
        return impute_loss(model, spec, batch, rng)
    if spec.kind == "anomaly":
        return anomaly_loss(model, spec, batch, rng)
    raise ContractError(f"task {spec.name!r}: no loss for kind {spec.kind!r}")


def pretrain_loss(
    model: UniTSModel,
    x: np.ndarray,
    source: str,
    rng: np.random.Generator,
    *,
    ratio: Optional[float] = None,
    truncate: bool = True,
) -> PretrainLoss:
    """Masked reconstruction through both pretraining paths.

    The batch is z-scored and truncated to a random whole-patch length, each sample gets
    its own mask plan, and the backbone runs once on [prompt | masked sample | CLS]. The
    GEN tower reconstructs the full sample from the sample rows; the CLS tower's output
    replaces the CLS row and the pretraining GEN tower reconstructs the sample again.
    """

    tower = model.pretrain_gen_tower
    if tower is None:
        raise ContractError("pretraining needs the pretraining GEN tower, which was dropped")
    normed, _, _ = zscore(np.asarray(x, dtype=float))
    b, t, _ = normed.shape
    k = model.config.patch_size
    s = math.ceil(t / k)
    if s < 2:
        raise ContractError(f"pretraining needs at least 2 patches per sample, got {s}")
    fraction, kept = draw_truncation(s, rng) if truncate else (1.0, s)
    length = min(t, kept * k)
    series = normed[:, :length]

    plans = [
        plan_mask(kept, draw_scheme(rng), rng, ratio=ratio, truncation=fraction)
        for _ in range(b)
    ]
    masked = np.stack([plan.as_mask(kept) for plan in plans])

    ts = model.token_set(source)
    body = assemble_impute(model.sample_tokens(series), ts, masked)
    d = model.config.d_model
    cls = ops.broadcast_to(ops.reshape(ts.cls, (1, 1, ts.n_vars, d)), (b, 1, ts.n_vars, d))
    tokens = SegmentedTokens(
        ops.concat([body.data, cls], axis=1), Spans(ts.n_prompt, kept, 0, 1)
    )
    encoded = model.encode(tokens)
    target = _target(series, encoded.data)

    gen_term = ops.mse(gen_tower(encoded, model.gen_tower, "sample", horizon=length), target)
    z_cls = cls_tower(encoded, model.cls_tower)
    head = ops.slice_axis(encoded.data, 1, 0, encoded.length - 1)
    with_cls = encoded.with_data(ops.concat([head, z_cls], axis=1))
    cls_term = ops.mse(gen_tower(with_cls, tower, "sample", horizon=length), target)
    return PretrainLoss(ops.add(gen_term, cls_term), gen_term.item(), cls_term.item())
