from __future__ import annotations

from dataclasses import asdict, dataclass, fields
from typing import Any, Literal

import numpy as np

from units.errors import ConfigError

DType = Literal["float64", "float32"]


@dataclass(frozen=True, slots=True)
class ModelConfig:
    """Shape and initialization settings of one model.

    - `n_blocks`, `d_model`, `n_heads`: backbone depth, embedding width and head count
    - `patch_size`: timesteps per sample token (also the unpatch size)
    - `n_prompt_tokens`: prompt tokens per data source
    - `dylinear_base`: base side length of every DyLinear weight
    - `max_positions`: length of the positional table
    - `mlp_ratio`: hidden width of tower MLPs as a multiple of `d_model`
    - `shared_tokens`: resolve every source to one token set
    """

    n_blocks: int = 3
    d_model: int = 64
    patch_size: int = 16
    n_heads: int = 4
    n_prompt_tokens: int = 10
    dylinear_base: int = 32
    max_positions: int = 256
    mlp_ratio: int = 2
    dtype: DType = "float64"
    shared_tokens: bool = False
    seed: int = 0

    def __post_init__(self) -> None:
        for name in ("n_blocks", "d_model", "patch_size", "n_heads", "dylinear_base"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1, got {getattr(self, name)}")
        if self.n_prompt_tokens < 0:
            raise ConfigError(f"n_prompt_tokens must be >= 0, got {self.n_prompt_tokens}")
        if self.d_model % 2:
            raise ConfigError(f"d_model must be even for the FFN channel split, got {self.d_model}")
        if self.d_model % self.n_heads:
            raise ConfigError(
                f"d_model {self.d_model} is not divisible by n_heads {self.n_heads}"
            )
        if self.mlp_ratio < 1:
            raise ConfigError(f"mlp_ratio must be >= 1, got {self.mlp_ratio}")
        if self.max_positions < self.n_prompt_tokens + 2:
            raise ConfigError(f"max_positions {self.max_positions} is too short")
        if self.dtype not in ("float64", "float32"):
            raise ConfigError(f"dtype must be float64 or float32, got {self.dtype!r}")

    @property
    def np_dtype(self) -> np.dtype:
        return np.dtype(self.dtype)

    @property
    def head_dim(self) -> int:
        return self.d_model // self.n_heads

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)

    @classmethod
    def from_dict(cls, raw: dict[str, Any]) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(raw) - known)
        if unknown:
            raise ConfigError(f"unknown model settings: {', '.join(unknown)}")
        return cls(**raw)
