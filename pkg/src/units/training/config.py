from __future__ import annotations

from dataclasses import asdict, dataclass, field, fields
from typing import Any, Literal, Optional

from units.errors import ConfigError

Regime = Literal["pretrain", "supervised", "prompt_tune", "single_task", "finetune"]
Schedule = Literal["multistep", "cosine"]

REGIMES: tuple[Regime, ...] = ("pretrain", "supervised", "prompt_tune", "single_task", "finetune")
TARGETED_REGIMES: tuple[Regime, ...] = ("prompt_tune", "single_task", "finetune")


@dataclass(frozen=True, slots=True)
class TrainingConfig:
    """How one training run proceeds.

    - `steps`: optimizer steps
    - `batch_size` / `effective_batch`: micro-batch size and samples per optimizer step;
      `effective_batch // batch_size` micro-batches are accumulated per step
    - `learning_rate`, `schedule`: base rate and its decay (multistep or cosine)
    - `loss_weights`: λ per dataset name; datasets not listed use their manifest weight
    - `use_moments`: adaptive-moment updates; off gives plain gradient steps
    - `prefetch`: depth of the background batch queue, 0 produces batches inline
    - `data_ratio`: fraction of each training split to use (few-shot runs)
    - `target_task`: the dataset a targeted regime trains on
    """

    regime: Regime = "supervised"
    steps: int = 1000
    batch_size: int = 32
    effective_batch: Optional[int] = None
    learning_rate: float = 1e-3
    schedule: Schedule = "multistep"
    seed: int = 0
    loss_weights: dict[str, float] = field(default_factory=dict)
    use_moments: bool = True
    log_every: int = 50
    prefetch: int = 0
    data_ratio: float = 1.0
    target_task: Optional[str] = None

    def __post_init__(self) -> None:
        if self.regime not in REGIMES:
            raise ConfigError(f"unknown training regime {self.regime!r}; expected {REGIMES}")
        if self.schedule not in ("multistep", "cosine"):
            raise ConfigError(f"unknown schedule {self.schedule!r}")
        if self.steps < 1 or self.batch_size < 1:
            raise ConfigError(
                f"steps and batch_size must be >= 1 (got {self.steps}, {self.batch_size})"
            )
        if self.effective_batch is None:
            object.__setattr__(self, "effective_batch", self.batch_size)
        if self.effective_batch < self.batch_size or self.effective_batch % self.batch_size:
            raise ConfigError(
                f"effective_batch {self.effective_batch} is not a multiple of "
                f"batch_size {self.batch_size}"
            )
        if not self.learning_rate > 0.0:
            raise ConfigError(f"learning_rate must be positive, got {self.learning_rate}")
        negative = sorted(k for k, w in self.loss_weights.items() if w < 0)
        if negative:
            raise ConfigError(f"negative loss weights for {', '.join(negative)}")
        if self.log_every < 1 or self.prefetch < 0:
            raise ConfigError("log_every must be >= 1 and prefetch >= 0")
        if not 0.0 < self.data_ratio <= 1.0:
            raise ConfigError(f"data_ratio must lie in (0, 1], got {self.data_ratio}")
        if self.regime in TARGETED_REGIMES and not self.target_task:
            raise ConfigError(f"the {self.regime} regime needs a target_task")

    @property
    def accumulation(self) -> int:
        return (self.effective_batch or self.batch_size) // self.batch_size

    def weight(self, dataset: str, default: float = 1.0) -> float:
        return float(self.loss_weights.get(dataset, default))

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> TrainingConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown training settings: {', '.join(unknown)}")
        values = dict(raw)
        if "loss_weights" in values:
            values["loss_weights"] = {
                str(k): float(v) for k, v in (values["loss_weights"] or {}).items()
            }
        return cls(**values)
