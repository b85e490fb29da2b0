"""YAML run configurations.

    manifest: datasets.yaml     # relative to this file
    out: runs/sup               # relative to the working directory
    seed: 7                     # seeds model initialization and training
    model: {n_blocks: 3, d_model: 64, patch_size: 16, n_heads: 4, n_prompt_tokens: 10}
    training: {regime: supervised, steps: 1000, batch_size: 32, learning_rate: 0.001}
"""

from __future__ import annotations

import logging
from collections.abc import Mapping
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Any, Optional

import yaml

from units.errors import ConfigError
from units.model import ModelConfig
from units.training import TrainingConfig

logger = logging.getLogger(__name__)

RESOLVED_NAME = "config.resolved.yaml"
_KEYS = {"manifest", "model", "training", "out", "seed"}


@dataclass(frozen=True, slots=True)
class RunConfig:
    manifest: Path
    model: ModelConfig
    training: TrainingConfig
    out: Path
    seed: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "manifest": str(self.manifest),
            "model": self.model.to_dict(),
            "training": self.training.to_dict(),
            "out": str(self.out),
            "seed": self.seed,
        }


def _section(raw: Mapping[str, Any], key: str) -> dict[str, Any]:
    value = raw.get(key) or {}
    if not isinstance(value, Mapping):
        raise ConfigError(f"run config: {key!r} must be a mapping")
    return dict(value)


def parse_run_config(
    raw: Any,
    base_dir: Path,
    *,
    seed: Optional[int] = None,
    out: Optional[Path] = None,
) -> RunConfig:
    """Validate a run config document; `seed` and `out` override the file's values.

    The run seed is written through to the model and training seeds.
    """

    if not isinstance(raw, Mapping):
        raise ConfigError("a run config is a YAML mapping")
    unknown = sorted(set(raw) - _KEYS)
    if unknown:
        raise ConfigError(f"run config: unknown keys {', '.join(unknown)}")
    if not raw.get("manifest"):
        raise ConfigError("run config: missing required key 'manifest'")
    run_seed = int(seed if seed is not None else raw.get("seed", 0))
    out_dir = out if out is not None else raw.get("out")
    if not out_dir:
        raise ConfigError("run config: no output directory (set 'out' or pass --out)")
    try:
        model = ModelConfig.from_dict(_section(raw, "model"))
        training = TrainingConfig.from_dict(_section(raw, "training"))
    except TypeError as exc:
        raise ConfigError(f"run config: {exc}") from None
    return RunConfig(
        manifest=(base_dir / str(raw["manifest"])).resolve(),
        model=replace(model, seed=run_seed),
        training=replace(training, seed=run_seed),
        out=Path(out_dir),
        seed=run_seed,
    )


def load_run_config(
    path: Path, *, seed: Optional[int] = None, out: Optional[Path] = None
) -> RunConfig:
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"no such run config: {path}")
    with path.open("r", encoding="utf-8") as f:
        try:
            raw = yaml.safe_load(f)
        except yaml.YAMLError as exc:
            raise ConfigError(f"{path}: invalid YAML ({exc})") from None
    return parse_run_config(raw, path.parent, seed=seed, out=out)


def write_resolved(config: RunConfig) -> Path:
    path = config.out / RESOLVED_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as f:
        yaml.safe_dump(config.to_dict(), f, sort_keys=True)
    logger.debug("wrote %s", path)
    return path
