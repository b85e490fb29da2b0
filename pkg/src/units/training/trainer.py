from __future__ import annotations

import logging
import math
from collections.abc import Callable, Iterator, Mapping
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from units.data import BatchPrefetcher, TimeSeriesDataset, epoch_stream, repetition_factors
from units.data.protocol import Batch
from units.errors import ConfigError
from units.model import UniTSModel
from units.tasks import TaskSpec, refresh_averaged_embeddings
from units.util.rng import make_rng

from .config import TrainingConfig
from .optimizer import OptimizerState, optimizer_step
from .regimes import apply_regime, audit_frozen, frozen_checksum, prepare_model
from .sampling import sample_dataset
from .schedule import lr_at
from .steps import pretrain_step, prompt_tune_step, supervised_step

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class MetricRecord:
    """One micro-batch loss: optimizer step, dataset, unscaled loss, learning rate."""

    step: int
    dataset: str
    loss: float
    lr: float


@dataclass(frozen=True, slots=True)
class TrainerState:
    step: int = 0
    total_steps: int = 0
    lr: float = 0.0
    last_loss: Optional[float] = None
    first_loss: Optional[float] = None
    finished: bool = False


# one optimizer step worth of micro-batches, in draw order
_StepPlan = tuple[tuple[str, Batch], ...]


def _few_shot(dataset: TimeSeriesDataset, ratio: float) -> TimeSeriesDataset:
    if ratio >= 1.0:
        return dataset
    keep = max(1, math.ceil(ratio * len(dataset)))
    return dataset.take(np.arange(keep))


class Trainer:
    """Runs one regime over a set of training splits.

    Datasets are drawn uniformly per micro-batch; each dataset streams shuffled epochs
    repeated to the size of the largest dataset. `effective_batch // batch_size`
    micro-batches are accumulated per optimizer step, each weighted by its share of the
    samples in the step. Listeners receive every `TrainerState` and `MetricRecord`.
    """

    _state: TrainerState
    _records: list[MetricRecord]

    def __init__(
        self,
        model: UniTSModel,
        config: TrainingConfig,
        datasets: Mapping[str, TimeSeriesDataset],
    ) -> None:
        if not datasets:
            raise ConfigError("training needs at least one dataset")
        self._model = model
        self._config = config
        self._all = dict(datasets)
        prepare_model(model, (d.spec for d in self._all.values()))

        self._target: Optional[TaskSpec] = None
        if config.target_task is not None:
            if config.target_task not in self._all:
                raise ConfigError(f"target task {config.target_task!r} is not a loaded dataset")
            self._target = self._all[config.target_task].spec
        if config.regime in ("pretrain", "supervised"):
            chosen = self._all
        else:
            chosen = {config.target_task: self._all[config.target_task]}
        self._datasets = {
            name: _few_shot(d, config.data_ratio) for name, d in sorted(chosen.items())
        }
        self._names = list(self._datasets)
        self._optimizer = OptimizerState()
        self._state = TrainerState(total_steps=config.steps)
        self._records = []
        self._state_listeners: list[Callable[[TrainerState], None]] = []
        self._metric_listeners: list[Callable[[MetricRecord], None]] = []

    @property
    def model(self) -> UniTSModel:
        return self._model

    @property
    def optimizer(self) -> OptimizerState:
        return self._optimizer

    def state(self) -> TrainerState:
        return self._state

    def records(self) -> list[MetricRecord]:
        return list(self._records)

    def dataset_names(self) -> list[str]:
        return list(self._names)

    def add_state_listener(self, listener: Callable[[TrainerState], None]) -> None:
        self._state_listeners.append(listener)

    def add_metric_listener(self, listener: Callable[[MetricRecord], None]) -> None:
        self._metric_listeners.append(listener)

    def _set_state(self, state: TrainerState) -> None:
        if state == self._state:
            return
        self._state = state
        for listener in self._state_listeners:
            listener(state)

    def _emit(self, record: MetricRecord) -> None:
        self._records.append(record)
        for listener in self._metric_listeners:
            listener(record)

    # -- batch production --------------------------------------------------------------

    def _plans(self) -> Iterator[_StepPlan]:
        config = self._config
        repeats = repetition_factors(self._datasets)
        streams = {
            name: epoch_stream(d, config.batch_size, config.seed, repeat=repeats[name])
            for name, d in self._datasets.items()
        }
        rng = make_rng(config.seed, "sample-dataset")
        for _ in range(config.steps):
            picks = [sample_dataset(self._names, rng) for _ in range(config.accumulation)]
            yield tuple((name, next(streams[name])) for name in picks)

    # -- training ----------------------------------------------------------------------

    def _micro_step(
        self, name: str, batch: Batch, rng: np.random.Generator, scale: float
    ) -> float:
        spec = self._datasets[name].spec
        regime = self._config.regime
        if regime == "pretrain":
            return pretrain_step(self._model, spec, batch, rng, grad_scale=scale)
        if regime == "prompt_tune":
            return prompt_tune_step(self._model, spec, batch, rng, grad_scale=scale)
        return supervised_step(
            self._model,
            [(spec, batch)],
            rng,
            weights={name: self._config.weight(name, spec.loss_weight)},
            grad_scale=scale,
        )

    def run(self) -> list[MetricRecord]:
        config = self._config
        model = self._model
        apply_regime(model, config.regime, self._target)
        guard = frozen_checksum(model) if config.regime == "prompt_tune" else None
        rng = make_rng(config.seed, "train", config.regime)
        logger.info(
            "training %s for %d steps on %s (effective batch %d)",
            config.regime,
            config.steps,
            ", ".join(self._names),
            config.effective_batch,
        )

        plans: Iterator[_StepPlan]
        prefetcher: Optional[BatchPrefetcher[_StepPlan]] = None
        if config.prefetch > 0:
            prefetcher = BatchPrefetcher(self._plans, depth=config.prefetch)
            plans = iter(prefetcher)
        else:
            plans = self._plans()
        try:
            for step, plan in enumerate(plans):
                lr = lr_at(config, step)
                total = sum(len(batch) for _, batch in plan)
                losses = []
                for name, batch in plan:
                    loss = self._micro_step(name, batch, rng, len(batch) / total)
                    losses.append(loss)
                    self._emit(MetricRecord(step, name, loss, lr))
                optimizer_step(
                    model.registry,
                    self._optimizer,
                    lr,
                    use_moments=config.use_moments,
                    allow_missing=True,
                )
                if guard is not None:
                    audit_frozen(model, guard)
                mean_loss = float(np.mean(losses))
                if (step + 1) % config.log_every == 0 or step == 0:
                    logger.info(
                        "step %d/%d %s loss %.6f lr %.3g",
                        step + 1,
                        config.steps,
                        plan[-1][0],
                        mean_loss,
                        lr,
                    )
                first = self._state.first_loss
                self._set_state(
                    replace(
                        self._state,
                        step=step + 1,
                        lr=lr,
                        last_loss=mean_loss,
                        first_loss=mean_loss if first is None else first,
                    )
                )
        finally:
            if prefetcher is not None:
                prefetcher.stop()

        self._refresh_averaged()
        self._set_state(replace(self._state, finished=True))
        return self.records()

    def _refresh_averaged(self) -> None:
        modes = self._model.class_modes()
        for name, dataset in self._datasets.items():
            if dataset.kind != "classify" or modes.get(name) != "averaged":
                continue
            if self._config.regime == "pretrain":
                continue
            refresh_averaged_embeddings(
                self._model, name, dataset.inputs, dataset.labels, source=dataset.source
            )
            logger.info("recomputed averaged class embeddings of %s", name)
