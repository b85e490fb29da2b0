"""Adaptive-moment parameter updates over a `ParameterRegistry`."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from units.errors import ContractError
from units.tensor import ParameterRegistry

logger = logging.getLogger(__name__)

BETA1 = 0.9
BETA2 = 0.999
EPSILON = 1e-8


@dataclass(slots=True)
class OptimizerState:
    """First/second moments and step counts, keyed by parameter name.

    Entries appear the first time a parameter is updated, so frozen parameters never
    carry state.
    """

    first: dict[str, np.ndarray] = field(default_factory=dict)
    second: dict[str, np.ndarray] = field(default_factory=dict)
    counts: dict[str, int] = field(default_factory=dict)
    steps: int = 0

    def names(self) -> list[str]:
        return sorted(self.counts)


def optimizer_step(
    registry: ParameterRegistry,
    state: OptimizerState,
    lr: float,
    *,
    use_moments: bool = True,
    allow_missing: bool = False,
) -> list[str]:
    """Update every trainable parameter from its gradient, then clear all gradients.

    A trainable parameter without a gradient is a contract error unless `allow_missing`
    is set (a multi-task micro-batch does not reach every token set); even then at least
    one gradient must be present. Returns the updated names.
    """

    trainable = registry.trainable()
    missing = [name for name, t in trainable if t.grad is None]
    if missing and (not allow_missing or len(missing) == len(trainable)):
        raise ContractError(
            f"no gradient for {len(missing)} trainable parameters (first: {missing[0]})"
        )

    updated = []
    for name, tensor in trainable:
        grad = tensor.grad
        if grad is None:
            continue
        if not use_moments:
            tensor.data = tensor.data - lr * grad
        else:
            count = state.counts.get(name, 0) + 1
            m = state.first.get(name)
            v = state.second.get(name)
            m = (1.0 - BETA1) * grad if m is None else BETA1 * m + (1.0 - BETA1) * grad
            v = (1.0 - BETA2) * grad**2 if v is None else BETA2 * v + (1.0 - BETA2) * grad**2
            m_hat = m / (1.0 - BETA1**count)
            v_hat = v / (1.0 - BETA2**count)
            tensor.data = (tensor.data - lr * m_hat / (np.sqrt(v_hat) + EPSILON)).astype(
                tensor.data.dtype, copy=False
            )
            state.first[name], state.second[name], state.counts[name] = m, v, count
        updated.append(name)
    state.steps += 1
    registry.zero_grad()
    logger.debug("optimizer step %d: %d parameters updated", state.steps, len(updated))
    return updated
