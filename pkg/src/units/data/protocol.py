from __future__ import annotations

from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Literal, Optional

import numpy as np

from units.errors import ConfigError, DataError
from units.tasks.protocol import ClassMode, TaskKind, TaskSpec

Split = Literal["train", "val", "test"]
SPLITS: tuple[Split, ...] = ("train", "val", "test")


@dataclass(frozen=True, slots=True)
class TimeSeriesDataset:
    """Stacked samples of one task and split.

    `inputs` is (N, t, v). Forecast datasets carry `targets` (N, f·k, v), classify
    datasets carry `labels` (N,), anomaly datasets may carry per-timestep
    `point_labels` (N, t) and impute datasets may carry evaluation `masks` (N, t).
    """

    name: str
    spec: TaskSpec
    split: Split
    inputs: np.ndarray
    targets: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    point_labels: Optional[np.ndarray] = None
    masks: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        if self.inputs.ndim != 3:
            raise DataError(
                f"dataset {self.name!r}: inputs must be (N, t, v), got {self.inputs.shape}"
            )
        n, t, v = self.inputs.shape
        if v != self.spec.n_vars:
            raise DataError(
                f"dataset {self.name!r}: {v} variables, task expects {self.spec.n_vars}"
            )
        kind = self.spec.kind
        if (self.labels is not None) != (kind == "classify"):
            raise DataError(f"dataset {self.name!r}: labels are required exactly for classify")
        if (self.targets is not None) != (kind == "forecast"):
            raise DataError(f"dataset {self.name!r}: targets are required exactly for forecast")
        expected = {
            "targets": (n, self.spec.horizon_steps, v),
            "labels": (n,),
            "point_labels": (n, t),
            "masks": (n, t),
        }
        for name, shape in expected.items():
            value = getattr(self, name)
            if value is not None and value.shape != shape:
                raise DataError(
                    f"dataset {self.name!r}: {name} shape {value.shape}, expected {shape}"
                )

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def source(self) -> str:
        return self.spec.source

    @property
    def kind(self) -> TaskKind:
        return self.spec.kind

    @property
    def window(self) -> int:
        return self.inputs.shape[1]

    def take(self, indices: np.ndarray) -> TimeSeriesDataset:
        def pick(a: Optional[np.ndarray]) -> Optional[np.ndarray]:
            return None if a is None else a[indices]

        return replace(
            self,
            inputs=self.inputs[indices],
            targets=pick(self.targets),
            labels=pick(self.labels),
            point_labels=pick(self.point_labels),
            masks=pick(self.masks),
        )

    def batch(self, indices: np.ndarray) -> Batch:
        part = self.take(indices)
        return Batch(
            task=self.name,
            inputs=part.inputs,
            targets=part.targets,
            labels=part.labels,
            point_labels=part.point_labels,
            masks=part.masks,
        )


@dataclass(frozen=True, slots=True)
class Batch:
    task: str
    inputs: np.ndarray
    targets: Optional[np.ndarray] = None
    labels: Optional[np.ndarray] = None
    point_labels: Optional[np.ndarray] = None
    masks: Optional[np.ndarray] = None

    def __len__(self) -> int:
        return self.inputs.shape[0]


@dataclass(frozen=True, slots=True)
class DatasetSplits:
    train: TimeSeriesDataset
    val: Optional[TimeSeriesDataset] = None
    test: Optional[TimeSeriesDataset] = None

    def get(self, split: Split) -> TimeSeriesDataset:
        found = getattr(self, split)
        if found is None:
            raise DataError(f"dataset {self.train.name!r} has no {split} split")
        return found


@dataclass(frozen=True, slots=True)
class SplitFractions:
    train: float = 0.7
    val: float = 0.1
    test: float = 0.2

    def __post_init__(self) -> None:
        values = (self.train, self.val, self.test)
        if min(values) < 0 or abs(sum(values) - 1.0) > 1e-9:
            raise ConfigError(f"split fractions must be >= 0 and sum to 1, got {values}")
        if self.train <= 0:
            raise ConfigError("the train split fraction must be positive")

    def bounds(self, n: int) -> dict[Split, tuple[int, int]]:
        """Contiguous [start, stop) ranges of `n` items per split, in train/val/test order."""

        train_end = int(np.floor(self.train * n + 1e-9))
        val_end = int(np.floor((self.train + self.val) * n + 1e-9))
        if self.test == 0:
            val_end = n
            if self.val == 0:
                train_end = n
        return {"train": (0, train_end), "val": (train_end, val_end), "test": (val_end, n)}


@dataclass(frozen=True, slots=True)
class GeneratorSpec:
    kind: str
    seed: int = 0
    params: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True, slots=True)
class ManifestEntry:
    name: str
    kind: TaskKind
    window: int
    source: str = ""
    path: Optional[Path] = None
    generator: Optional[GeneratorSpec] = None
    stride: Optional[int] = None
    split: SplitFractions = field(default_factory=SplitFractions)
    horizon_tokens: Optional[int] = None
    n_classes: Optional[int] = None
    anomaly_ratio: Optional[float] = None
    loss_weight: float = 1.0
    class_mode: ClassMode = "trained"
    columns: Optional[tuple[str, ...]] = None
    label_column: Optional[str] = None

    def task_spec(self, n_vars: int, patch_size: int) -> TaskSpec:
        return TaskSpec(
            name=self.name,
            kind=self.kind,
            n_vars=n_vars,
            patch_size=patch_size,
            source=self.source or self.name,
            horizon_tokens=self.horizon_tokens,
            n_classes=self.n_classes,
            anomaly_ratio=self.anomaly_ratio,
            loss_weight=self.loss_weight,
            class_mode=self.class_mode,
        )


@dataclass(frozen=True, slots=True)
class DatasetManifest:
    entries: tuple[ManifestEntry, ...]
    base_dir: Path = Path(".")

    def names(self) -> list[str]:
        return [e.name for e in self.entries]

    def entry(self, name: str) -> ManifestEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise ConfigError(f"dataset {name!r} is not in the manifest")
