"""Which parameters each training regime optimizes."""

from __future__ import annotations

import logging
from collections.abc import Callable, Iterable
from typing import Optional

from units.errors import ConfigError, ContractError
from units.model import PRETRAIN_TOWER_PREFIX, UniTSModel
from units.tasks import TaskSpec

from .config import Regime

logger = logging.getLogger(__name__)

CLASS_EMBEDDING_PREFIX = "class_embeddings."


def prepare_model(model: UniTSModel, specs: Iterable[TaskSpec]) -> None:
    """Create the token set of every source and the class embeddings of every classify task."""

    for spec in specs:
        model.add_token_set(spec.source, spec.n_vars)
        if spec.kind == "classify":
            model.add_class_embeddings(
                spec.name, spec.n_classes or 2, spec.n_vars, spec.class_mode
            )


def _averaged(model: UniTSModel) -> set[str]:
    return {
        CLASS_EMBEDDING_PREFIX + task
        for task, mode in model.class_modes().items()
        if mode == "averaged"
    }


def frozen_predicate(
    model: UniTSModel, regime: Regime, target: Optional[TaskSpec] = None
) -> Callable[[str], bool]:
    """A predicate that is true for the parameter names `regime` keeps fixed.

    Averaged class embeddings are never trained by gradient; they are recomputed from
    CLS outputs after training.
    """

    averaged = _averaged(model)
    if regime == "pretrain":
        return lambda name: name.startswith(CLASS_EMBEDDING_PREFIX)
    if regime in ("supervised", "single_task", "finetune"):
        pretrain = PRETRAIN_TOWER_PREFIX + "."
        return lambda name: name.startswith(pretrain) or name in averaged
    if regime == "prompt_tune":
        if target is None:
            raise ConfigError("prompt tuning needs a target task")
        trainable_prefix = f"tokens.{model.token_key(target.source)}."
        embedding = CLASS_EMBEDDING_PREFIX + target.name
        return lambda name: not (
            name.startswith(trainable_prefix)
            or (target.kind == "classify" and name == embedding and name not in averaged)
        )
    raise ConfigError(f"unknown training regime {regime!r}")


def apply_regime(
    model: UniTSModel, regime: Regime, target: Optional[TaskSpec] = None
) -> list[str]:
    """Freeze and unfreeze the registry for `regime`; returns the trainable names."""

    registry = model.registry
    registry.freeze_where(frozen_predicate(model, regime, target))
    trainable = [name for name, _ in registry.trainable()]
    if not trainable:
        raise ConfigError(f"the {regime} regime leaves no trainable parameters")
    logger.info(
        "%s regime: %d trainable tensors (%d values), %d frozen",
        regime,
        len(trainable),
        registry.count(trainable_only=True),
        len(registry.frozen()),
    )
    return trainable


def frozen_checksum(model: UniTSModel) -> str:
    registry = model.registry
    return registry.checksum([name for name, _ in registry.frozen()])


def audit_frozen(model: UniTSModel, expected: str) -> None:
    """Raise if any frozen tensor changed since `expected` was taken."""

    actual = frozen_checksum(model)
    if actual != expected:
        raise ContractError("a frozen parameter changed during training")
