from __future__ import annotations

import math
from collections.abc import Iterator, Mapping

import numpy as np

from units.errors import ContractError, DataError
from units.util.rng import make_rng

from .protocol import Batch, TimeSeriesDataset


def batch_iter(
    dataset: TimeSeriesDataset,
    batch_size: int,
    rng: np.random.Generator,
    *,
    repeat: int = 1,
) -> Iterator[Batch]:
    """One epoch: `repeat` copies of every sample, shuffled, cut into batches.

    The final partial batch is kept.
    """

    if batch_size < 1:
        raise ContractError(f"batch_size must be >= 1, got {batch_size}")
    if repeat < 1:
        raise ContractError(f"repeat must be >= 1, got {repeat}")
    if len(dataset) == 0:
        raise DataError(f"dataset {dataset.name!r} is empty")
    order = rng.permutation(np.tile(np.arange(len(dataset)), repeat))
    for start in range(0, order.size, batch_size):
        yield dataset.batch(order[start : start + batch_size])


def epoch_stream(
    dataset: TimeSeriesDataset, batch_size: int, seed: int, *, repeat: int = 1
) -> Iterator[Batch]:
    """Endless batches; epoch `e` is shuffled by the stream (seed, dataset name, e)."""

    epoch = 0
    while True:
        rng = make_rng(seed, "epoch", dataset.name, epoch)
        yield from batch_iter(dataset, batch_size, rng, repeat=repeat)
        epoch += 1


def repetition_factors(datasets: Mapping[str, TimeSeriesDataset]) -> dict[str, int]:
    """Per-dataset epoch repetition so each epoch roughly matches the largest dataset."""

    if not datasets:
        return {}
    largest = max(len(d) for d in datasets.values())
    return {name: max(1, math.ceil(largest / max(len(d), 1))) for name, d in datasets.items()}
