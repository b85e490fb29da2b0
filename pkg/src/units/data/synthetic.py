"""Deterministic synthetic datasets standing in for real corpora.

Every draw goes through `units.util.rng.make_rng` (Philox), so a (kind, seed, params)
triple regenerates the same arrays on any platform.
"""

from __future__ import annotations

import math
from collections.abc import Mapping
from dataclasses import replace
from typing import Any, Optional

import numpy as np

from units.errors import ConfigError
from units.model.tokens import block_masks
from units.tasks.protocol import ClassMode, TaskKind, TaskSpec
from units.util.rng import make_rng

from .protocol import SPLITS, DatasetSplits, SplitFractions, TimeSeriesDataset

GENERATOR_TASKS: dict[str, TaskKind] = {
    "sine_forecast": "forecast",
    "two_class": "classify",
    "spike_anomaly": "anomaly",
    "impute_sine": "impute",
}

NOISE_STD = 0.05
SPIKE_SIGMAS = 5.0
SPIKE_RATE = 0.05
IMPUTE_MASK_RATIO = 0.25

_COMMON = {"n_samples": 128, "window": 64, "n_vars": 1, "noise": NOISE_STD}
_DEFAULTS: dict[str, dict[str, Any]] = {
    "sine_forecast": {
        "horizon_tokens": 2,
        "n_components": None,
        "periods": None,
        "period_range": (12.0, 48.0),
    },
    "two_class": {"low_period": 32.0, "high_period": 8.0},
    "spike_anomaly": {
        "period_range": (16.0, 48.0),
        "spike_rate": SPIKE_RATE,
        "anomaly_ratio": None,
    },
    "impute_sine": {"period_range": (12.0, 48.0), "mask_ratio": IMPUTE_MASK_RATIO},
}


def _resolve(kind: str, params: Mapping[str, Any]) -> dict[str, Any]:
    if kind not in GENERATOR_TASKS:
        raise ConfigError(
            f"unknown generator {kind!r}; expected one of {sorted(GENERATOR_TASKS)}"
        )
    merged = {**_COMMON, **_DEFAULTS[kind]}
    unknown = sorted(set(params) - set(merged))
    if unknown:
        raise ConfigError(f"generator {kind!r} does not take {', '.join(unknown)}")
    merged.update(params)
    for key in ("n_samples", "window", "n_vars"):
        if int(merged[key]) < 1:
            raise ConfigError(f"generator {kind!r}: {key} must be >= 1")
    return merged


def _sines(
    rng: np.random.Generator, length: int, periods: np.ndarray, amp_range=(0.5, 1.5)
) -> np.ndarray:
    """Sum of sinusoids with per-call random amplitude and phase; periods (v, c) -> (length, v)."""

    t = np.arange(length, dtype=float)[:, None, None]
    amps = rng.uniform(*amp_range, size=periods.shape)
    phases = rng.uniform(0.0, 2.0 * math.pi, size=periods.shape)
    return np.sum(amps * np.sin(2.0 * math.pi * t / periods + phases), axis=2)


def _sine_forecast(rng: np.random.Generator, p: dict[str, Any], patch_size: int):
    v, n = int(p["n_vars"]), int(p["n_samples"])
    components = p["n_components"] or int(rng.integers(2, 4))
    if p["periods"] is not None:
        periods = np.broadcast_to(np.asarray(p["periods"], dtype=float), (v, len(p["periods"])))
    else:
        periods = rng.uniform(*p["period_range"], size=(v, components))
    horizon = int(p["horizon_tokens"]) * patch_size
    length = int(p["window"]) + horizon
    series = np.stack([_sines(rng, length, periods) for _ in range(n)])
    series += rng.normal(0.0, p["noise"], size=series.shape)
    window = int(p["window"])
    return series[:, :window], {"targets": series[:, window:]}, {
        "horizon_tokens": int(p["horizon_tokens"])
    }


def _two_class(rng: np.random.Generator, p: dict[str, Any], patch_size: int):
    v, n, window = int(p["n_vars"]), int(p["n_samples"]), int(p["window"])
    if n % 2:
        raise ConfigError(f"two_class needs an even n_samples for balanced labels, got {n}")
    labels = rng.permutation(np.repeat([0, 1], n // 2))
    periods = {0: float(p["low_period"]), 1: float(p["high_period"])}
    series = np.stack(
        [_sines(rng, window, np.full((v, 1), periods[int(c)]), (0.8, 1.2)) for c in labels]
    )
    series += rng.normal(0.0, p["noise"], size=series.shape)
    return series, {"labels": labels.astype(int)}, {"n_classes": 2}


def _spike_anomaly(rng: np.random.Generator, p: dict[str, Any], patch_size: int):
    v, n, window = int(p["n_vars"]), int(p["n_samples"]), int(p["window"])
    count = max(1, int(round(float(p["spike_rate"]) * window)))
    inputs = np.empty((n, window, v))
    point_labels = np.zeros((n, window), dtype=int)
    for i in range(n):
        clean = _sines(rng, window, rng.uniform(*p["period_range"], size=(v, 1)))
        noisy = clean + rng.normal(0.0, p["noise"], size=clean.shape)
        positions = rng.choice(window, size=count, replace=False)
        variables = rng.integers(0, v, size=count)
        signs = rng.choice([-1.0, 1.0], size=count)
        sigma = clean.std(axis=0)
        noisy[positions, variables] += SPIKE_SIGMAS * sigma[variables] * signs
        inputs[i] = noisy
        point_labels[i, positions] = 1
    ratio = p["anomaly_ratio"] if p["anomaly_ratio"] is not None else count / window
    return inputs, {"point_labels": point_labels}, {"anomaly_ratio": float(ratio)}


def _impute_sine(rng: np.random.Generator, p: dict[str, Any], patch_size: int):
    v, n, window = int(p["n_vars"]), int(p["n_samples"]), int(p["window"])
    periods = rng.uniform(*p["period_range"], size=(v, 2))
    series = np.stack([_sines(rng, window, periods) for _ in range(n)])
    series += rng.normal(0.0, p["noise"], size=series.shape)
    masks = block_masks(rng, n, window, patch_size, float(p["mask_ratio"]))
    return series, {"masks": masks}, {}


_BUILDERS = {
    "sine_forecast": _sine_forecast,
    "two_class": _two_class,
    "spike_anomaly": _spike_anomaly,
    "impute_sine": _impute_sine,
}


def make_synthetic(
    kind: str,
    seed: int,
    params: Optional[Mapping[str, Any]] = None,
    *,
    name: Optional[str] = None,
    source: str = "",
    patch_size: int = 16,
    loss_weight: float = 1.0,
    class_mode: ClassMode = "trained",
) -> TimeSeriesDataset:
    """Generate a whole synthetic dataset (all samples, split "train").

    sine_forecast: 2-3 sinusoids per variable with per-sample amplitude and phase plus
    Gaussian noise; the target is the continuation. two_class: low versus high frequency
    sines with exactly balanced labels. spike_anomaly: a sine with spikes of 5 clean-window
    standard deviations at 5% of timesteps, labeled per timestep. impute_sine: sines with
    whole-patch block masks.
    """

    resolved = _resolve(kind, params or {})
    rng = make_rng(seed, "synthetic", kind)
    inputs, arrays, spec_fields = _BUILDERS[kind](rng, resolved, patch_size)
    name = name or kind
    spec = TaskSpec(
        name=name,
        kind=GENERATOR_TASKS[kind],
        n_vars=int(resolved["n_vars"]),
        patch_size=patch_size,
        source=source or name,
        loss_weight=loss_weight,
        class_mode=class_mode,
        **spec_fields,
    )
    return TimeSeriesDataset(name, spec, "train", inputs, **arrays)


def split_samples(dataset: TimeSeriesDataset, fractions: SplitFractions) -> DatasetSplits:
    """Split independently generated samples into contiguous train/val/test blocks."""

    bounds = fractions.bounds(len(dataset))
    parts = {}
    for split in SPLITS:
        lo, hi = bounds[split]
        if hi > lo:
            parts[split] = replace(dataset.take(np.arange(lo, hi)), split=split)
    if "train" not in parts:
        raise ConfigError(f"dataset {dataset.name!r} is too small for a train split")
    return DatasetSplits(**parts)
