"""YAML dataset manifests.

    datasets:
      - name: sines_a            # unique, no dots
        source: sines            # token-sharing key, defaults to name
        kind: forecast           # forecast | classify | impute | anomaly
        generator: {kind: sine_forecast, seed: 1, params: {n_samples: 256}}
        # or: path: data/etth1.csv (relative to the manifest), columns: [...], label_column: label
        window: 64               # context timesteps
        stride: 16               # CSV only, defaults to window
        split: {train: 0.7, val: 0.1, test: 0.2}
        horizon_tokens: 2        # forecast
        n_classes: 2             # classify
        anomaly_ratio: 0.05      # anomaly
        loss_weight: 1.0
        class_mode: trained      # classify: trained | averaged
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import fields
from pathlib import Path
from typing import Any

import yaml

from units.errors import ConfigError

from .csv_loader import load_csv
from .protocol import (
    DatasetManifest,
    DatasetSplits,
    GeneratorSpec,
    ManifestEntry,
    SplitFractions,
)
from .synthetic import GENERATOR_TASKS, make_synthetic, split_samples

logger = logging.getLogger(__name__)

_ENTRY_KEYS = {f.name for f in fields(ManifestEntry)}
# generator params that are filled from the entry when the entry sets them
_FORWARDED = ("window", "horizon_tokens", "anomaly_ratio")


def _require(raw: Mapping[str, Any], key: str, where: str) -> Any:
    if key not in raw or raw[key] is None:
        raise ConfigError(f"{where}: missing required field {key!r}")
    return raw[key]


def _split(raw: Mapping[str, Any], where: str) -> SplitFractions:
    if not raw:
        return SplitFractions()
    unknown = sorted(set(raw) - {"train", "val", "test"})
    if unknown:
        raise ConfigError(f"{where}: unknown split names {', '.join(unknown)}")
    values = {"train": 0.0, "val": 0.0, "test": 0.0}
    values.update({k: float(v) for k, v in raw.items()})
    return SplitFractions(**values)


def parse_entry(raw: Mapping[str, Any], base_dir: Path) -> ManifestEntry:
    if not isinstance(raw, Mapping):
        raise ConfigError(f"manifest entries must be mappings, got {type(raw).__name__}")
    name = str(_require(raw, "name", "manifest entry"))
    where = f"dataset {name!r}"
    unknown = sorted(set(raw) - _ENTRY_KEYS)
    if unknown:
        raise ConfigError(f"{where}: unknown fields {', '.join(unknown)}")
    if not name or "." in name:
        raise ConfigError(f"{where}: names must be non-empty and contain no dots")

    path = raw.get("path")
    gen_raw = raw.get("generator")
    if (path is None) == (gen_raw is None):
        raise ConfigError(f"{where}: give exactly one of 'path' or 'generator'")
    generator = None
    if gen_raw is not None:
        if not isinstance(gen_raw, Mapping):
            raise ConfigError(f"{where}: generator must be a mapping")
        generator = GeneratorSpec(
            kind=str(_require(gen_raw, "kind", f"{where} generator")),
            seed=int(gen_raw.get("seed", 0)),
            params=dict(gen_raw.get("params") or {}),
        )
        if generator.kind not in GENERATOR_TASKS:
            raise ConfigError(f"{where}: unknown generator {generator.kind!r}")

    kind = raw.get("kind") or (GENERATOR_TASKS[generator.kind] if generator else None)
    if kind is None:
        raise ConfigError(f"{where}: missing required field 'kind'")
    if generator is not None and GENERATOR_TASKS[generator.kind] != kind:
        raise ConfigError(
            f"{where}: generator {generator.kind!r} produces {GENERATOR_TASKS[generator.kind]} "
            f"data, not {kind}"
        )

    split_raw = raw.get("split") or {}
    if not isinstance(split_raw, Mapping):
        raise ConfigError(f"{where}: split must be a mapping of fractions")
    columns = raw.get("columns")
    window = int(_require(raw, "window", where))
    if window < 1:
        raise ConfigError(f"{where}: window must be >= 1")
    return ManifestEntry(
        name=name,
        kind=kind,
        window=window,
        source=str(raw.get("source") or name),
        path=None if path is None else (base_dir / str(path)),
        generator=generator,
        stride=None if raw.get("stride") is None else int(raw["stride"]),
        split=_split(split_raw, where),
        horizon_tokens=raw.get("horizon_tokens"),
        n_classes=raw.get("n_classes"),
        anomaly_ratio=raw.get("anomaly_ratio"),
        loss_weight=float(raw.get("loss_weight", 1.0)),
        class_mode=raw.get("class_mode", "trained"),
        columns=None if columns is None else tuple(str(c) for c in columns),
        label_column=raw.get("label_column"),
    )


def parse_manifest(raw: Any, base_dir: Path) -> DatasetManifest:
    if not isinstance(raw, Mapping) or not isinstance(raw.get("datasets"), list):
        raise ConfigError("a manifest is a mapping with a 'datasets' list")
    entries = tuple(parse_entry(e, base_dir) for e in raw["datasets"])
    if not entries:
        raise ConfigError("the manifest lists no datasets")
    names = [e.name for e in entries]
    duplicates = sorted({n for n in names if names.count(n) > 1})
    if duplicates:
        raise ConfigError(f"duplicate dataset names: {', '.join(duplicates)}")
    return DatasetManifest(entries, base_dir)


def load_manifest(path: Path) -> DatasetManifest:
    path = Path(path)
    with path.open("r", encoding="utf-8") as f:
        raw = yaml.safe_load(f)
    return parse_manifest(raw, path.parent)


def load_entry(entry: ManifestEntry, *, patch_size: int) -> DatasetSplits:
    """Materialize one manifest entry into its splits."""

    if entry.path is not None:
        return load_csv(entry.path, entry, patch_size=patch_size)
    gen = entry.generator
    assert gen is not None
    params = dict(gen.params)
    for key in _FORWARDED:
        value = getattr(entry, key)
        if value is not None:
            params.setdefault(key, value)
    dataset = make_synthetic(
        gen.kind,
        gen.seed,
        params,
        name=entry.name,
        source=entry.source,
        patch_size=patch_size,
        loss_weight=entry.loss_weight,
        class_mode=entry.class_mode,
    )
    splits = split_samples(dataset, entry.split)
    logger.info(
        "generated %s (%s, seed %d): %d train samples",
        entry.name,
        gen.kind,
        gen.seed,
        len(splits.train),
    )
    return splits


def load_datasets(manifest: DatasetManifest, *, patch_size: int) -> dict[str, DatasetSplits]:
    return {e.name: load_entry(e, patch_size=patch_size) for e in manifest.entries}
