from __future__ import annotations

import math

from units.errors import ContractError

from .config import TrainingConfig

MULTISTEP_MILESTONES = (0.5, 0.75)
MULTISTEP_FACTOR = 0.1


def lr_at(config: TrainingConfig, step: int) -> float:
    """Learning rate at optimizer step `step` of `config.steps`.

    multistep: the base rate times 0.1 for each milestone (50%, 75% of the run) reached.
    cosine: base · (1 + cos(π · step / steps)) / 2, so the final step reaches 0.
    """

    total = config.steps
    if not 0 <= step <= total:
        raise ContractError(f"step {step} outside 0..{total}")
    base = config.learning_rate
    if config.schedule == "cosine":
        return base * (1.0 + math.cos(math.pi * step / total)) / 2.0
    passed = sum(1 for m in MULTISTEP_MILESTONES if step >= m * total)
    return base * MULTISTEP_FACTOR**passed
