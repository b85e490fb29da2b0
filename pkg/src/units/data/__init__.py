from __future__ import annotations

from .batching import batch_iter, epoch_stream, repetition_factors
from .csv_loader import load_csv, read_series_csv, write_series_csv
from .manifest import load_datasets, load_entry, load_manifest, parse_manifest
from .prefetch import BatchPrefetcher
from .protocol import (
    SPLITS,
    Batch,
    DatasetManifest,
    DatasetSplits,
    GeneratorSpec,
    ManifestEntry,
    Split,
    SplitFractions,
    TimeSeriesDataset,
)
from .synthetic import GENERATOR_TASKS, make_synthetic, split_samples

__all__ = [
    "Batch",
    "BatchPrefetcher",
    "DatasetManifest",
    "DatasetSplits",
    "GENERATOR_TASKS",
    "GeneratorSpec",
    "ManifestEntry",
    "SPLITS",
    "Split",
    "SplitFractions",
    "TimeSeriesDataset",
    "batch_iter",
    "epoch_stream",
    "load_csv",
    "load_datasets",
    "load_entry",
    "load_manifest",
    "make_synthetic",
    "parse_manifest",
    "read_series_csv",
    "repetition_factors",
    "split_samples",
    "write_series_csv",
]
