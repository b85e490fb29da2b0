"""One forward/backward pass per call.

Each step records its forward pass on a fresh tape and back-propagates the loss scaled by
`grad_scale`, adding to whatever gradients are already accumulated. The optimizer update is
left to the caller so several micro-batches can share one step.
"""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from typing import Optional

import numpy as np

from units.data.protocol import Batch
from units.errors import ConfigError, ContractError
from units.model import UniTSModel
from units.tasks import TaskSpec, pretrain_loss, task_loss
from units.tensor import Tape, Tensor, ops


def _backward(loss: Tensor, tape: Tape, grad_scale: float) -> None:
    tape.backward(loss if grad_scale == 1.0 else ops.scale(loss, grad_scale))


def pretrain_step(
    model: UniTSModel,
    spec: TaskSpec,
    batch: Batch,
    rng: np.random.Generator,
    *,
    grad_scale: float = 1.0,
    ratio: Optional[float] = None,
) -> float:
    """Unified masked-reconstruction loss of one batch; returns the unscaled loss."""

    with Tape() as tape:
        loss = pretrain_loss(model, batch.inputs, spec.source, rng, ratio=ratio)
        _backward(loss.total, tape, grad_scale)
    return loss.total.item()


def supervised_step(
    model: UniTSModel,
    pairs: Sequence[tuple[TaskSpec, Batch]],
    rng: np.random.Generator,
    *,
    weights: Optional[Mapping[str, float]] = None,
    grad_scale: float = 1.0,
) -> float:
    """Weighted sum of task losses, Σ λ_i · L_i, over one batch per sampled dataset.

    λ comes from `weights` by dataset name and falls back to the task's `loss_weight`.
    """

    if not pairs:
        raise ContractError("a supervised step needs at least one batch")
    weights = weights or {}
    with Tape() as tape:
        terms = []
        for spec, batch in pairs:
            lam = float(weights.get(spec.name, spec.loss_weight))
            terms.append(ops.scale(task_loss(model, spec, batch, rng), lam))
        total = terms[0]
        for term in terms[1:]:
            total = ops.add(total, term)
        _backward(total, tape, grad_scale)
    return total.item()


def prompt_tune_step(
    model: UniTSModel,
    spec: TaskSpec,
    batch: Batch,
    rng: np.random.Generator,
    *,
    grad_scale: float = 1.0,
) -> float:
    """Task loss with gradients reaching only the unfrozen token set (and class embeddings)."""

    if not model.registry.trainable():
        raise ConfigError("prompt tuning found no trainable parameters")
    with Tape() as tape:
        loss = task_loss(model, spec, batch, rng)
        _backward(loss, tape, grad_scale)
    return loss.item()
