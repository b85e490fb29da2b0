from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional

import numpy as np

from units.errors import ConfigError
from units.model.towers import ClassMode

TaskKind = Literal["forecast", "classify", "impute", "anomaly"]
TASK_KINDS: tuple[TaskKind, ...] = ("forecast", "classify", "impute", "anomaly")


@dataclass(frozen=True, slots=True)
class TaskSpec:
    """What one dataset asks of the shared model.

    `horizon_tokens` is set only for forecast tasks, `n_classes` only for classify and
    `anomaly_ratio` only for anomaly. `source` is the token-sharing key.
    """

    name: str
    kind: TaskKind
    n_vars: int
    patch_size: int
    source: str = ""
    horizon_tokens: Optional[int] = None
    n_classes: Optional[int] = None
    anomaly_ratio: Optional[float] = None
    loss_weight: float = 1.0
    class_mode: ClassMode = "trained"

    def __post_init__(self) -> None:
        if self.kind not in TASK_KINDS:
            raise ConfigError(f"task {self.name!r}: unknown kind {self.kind!r}")
        if not self.source:
            object.__setattr__(self, "source", self.name)
        if self.n_vars < 1 or self.patch_size < 1:
            raise ConfigError(
                f"task {self.name!r}: n_vars and patch_size must be >= 1 "
                f"(got {self.n_vars}, {self.patch_size})"
            )
        if self.loss_weight < 0:
            raise ConfigError(f"task {self.name!r}: loss_weight must be >= 0")
        required = {
            "horizon_tokens": self.kind == "forecast",
            "n_classes": self.kind == "classify",
            "anomaly_ratio": self.kind == "anomaly",
        }
        for field_name, needed in required.items():
            present = getattr(self, field_name) is not None
            if needed and not present:
                raise ConfigError(f"{self.kind} task {self.name!r} needs {field_name}")
            if present and not needed:
                raise ConfigError(f"{field_name} does not apply to {self.kind} task {self.name!r}")
        if self.horizon_tokens is not None and self.horizon_tokens < 1:
            raise ConfigError(f"task {self.name!r}: horizon_tokens must be >= 1")
        if self.n_classes is not None and self.n_classes < 2:
            raise ConfigError(f"task {self.name!r}: n_classes must be >= 2")
        if self.anomaly_ratio is not None and not 0.0 < self.anomaly_ratio < 1.0:
            raise ConfigError(f"task {self.name!r}: anomaly_ratio must lie in (0, 1)")
        if self.class_mode not in ("trained", "averaged"):
            raise ConfigError(f"task {self.name!r}: unknown class mode {self.class_mode!r}")

    @property
    def horizon_steps(self) -> int:
        return (self.horizon_tokens or 0) * self.patch_size

    @property
    def normalizes(self) -> bool:
        """Per-sample z-scoring is on for generative reconstruction of values."""

        return self.kind in ("forecast", "impute")


@dataclass(frozen=True, slots=True)
class AnomalyThreshold:
    threshold: float
    ratio: float
    n_errors: int = 0

    def flag(self, errors: np.ndarray) -> np.ndarray:
        return np.asarray(errors) > self.threshold
