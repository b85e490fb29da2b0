from __future__ import annotations

import logging
from typing import Optional

import numpy as np

from units.errors import ConfigError, RegistryError
from units.tensor import ParameterRegistry, Tensor

from .blocks import Backbone, backbone_forward, build_backbone
from .config import ModelConfig
from .init import ParameterFactory
from .tokens import PatchEmbedding, SegmentedTokens, TokenSet, add_positions, patchify
from .towers import (
    ClassEmbeddings,
    ClassMode,
    ClsTower,
    GenTower,
    build_cls_tower,
    build_gen_tower,
)

logger = logging.getLogger(__name__)

SHARED_TOKEN_KEY = "shared"
PRETRAIN_TOWER_PREFIX = "towers.gen_pretrain"


def _check_key(kind: str, key: str) -> None:
    if not key or "." in key or key != key.strip():
        raise ConfigError(f"invalid {kind} name {key!r}: must be non-empty without dots")


class UniTSModel:
    """One shared backbone, one GEN tower and one CLS tower, plus per-source tokens.

    Every parameter lives in `registry` under a dot path:
    `embedding.*`, `backbone.blocks.<i>.*`, `towers.gen.*`, `towers.cls.*`,
    `towers.gen_pretrain.*` (pretraining only), `tokens.<source>.{prompt,gen,cls}` and
    `class_embeddings.<task>`.
    """

    config: ModelConfig
    registry: ParameterRegistry
    embedding: PatchEmbedding
    backbone: Backbone
    gen_tower: GenTower
    cls_tower: ClsTower
    pretrain_gen_tower: Optional[GenTower]

    def __init__(self, config: ModelConfig, *, with_pretrain_tower: bool = True) -> None:
        self.config = config
        self.registry = ParameterRegistry()
        self._factory = ParameterFactory(self.registry, config.seed, config.np_dtype)
        self._token_sets: dict[str, TokenSet] = {}
        self._class_embeddings: dict[str, ClassEmbeddings] = {}

        f, d, k = self._factory, config.d_model, config.patch_size
        hidden = config.mlp_ratio * d
        self.embedding = PatchEmbedding(
            patch_size=k,
            proj_weight=f.matrix("embedding.proj.weight", k, d),
            proj_bias=f.zeros("embedding.proj.bias", (d,)),
            positions=f.normal("embedding.positions", (config.max_positions, d)),
            unpatch_weight=f.matrix("embedding.unpatch.weight", d, k),
            unpatch_bias=f.zeros("embedding.unpatch.bias", (k,)),
        )
        self.backbone = build_backbone(
            f, config.n_blocks, d, config.n_heads, config.dylinear_base
        )
        self.gen_tower = build_gen_tower(
            f, "towers.gen", self.embedding, config.dylinear_base, hidden
        )
        self.cls_tower = build_cls_tower(f, "towers.cls", d, config.n_heads, hidden)
        self.pretrain_gen_tower = None
        if with_pretrain_tower:
            self.pretrain_gen_tower = build_gen_tower(
                f, PRETRAIN_TOWER_PREFIX, self.embedding, config.dylinear_base, hidden
            )

    # -- token sets ----------------------------------------------------------------------

    def token_key(self, source: str) -> str:
        return SHARED_TOKEN_KEY if self.config.shared_tokens else source

    def add_token_set(self, source: str, n_vars: int) -> TokenSet:
        """Create the token set of `source` (or return it if it already exists for `n_vars`)."""

        key = self.token_key(source)
        _check_key("source", key)
        existing = self._token_sets.get(key)
        if existing is not None:
            if existing.n_vars != n_vars:
                raise ConfigError(
                    f"token set {key!r} has {existing.n_vars} variables, source {source!r} "
                    f"needs {n_vars}"
                )
            return existing
        if n_vars < 1:
            raise ConfigError(f"source {source!r} needs at least one variable")
        f, d, p = self._factory, self.config.d_model, self.config.n_prompt_tokens
        prefix = f"tokens.{key}"
        ts = TokenSet(
            source=key,
            prompt=f.normal(f"{prefix}.prompt", (p, n_vars, d)) if p else None,
            gen=f.normal(f"{prefix}.gen", (1, n_vars, d)),
            cls=f.normal(f"{prefix}.cls", (1, n_vars, d)),
        )
        self._token_sets[key] = ts
        logger.debug("added token set %s (v=%d, p=%d)", key, n_vars, p)
        return ts

    def token_set(self, source: str) -> TokenSet:
        key = self.token_key(source)
        try:
            return self._token_sets[key]
        except KeyError:
            raise RegistryError(f"unknown source: {source}") from None

    def sources(self) -> list[str]:
        return sorted(self._token_sets)

    # -- class embeddings ----------------------------------------------------------------

    def add_class_embeddings(
        self, task: str, n_classes: int, n_vars: int, mode: ClassMode = "trained"
    ) -> ClassEmbeddings:
        _check_key("task", task)
        if n_classes < 2:
            raise ConfigError(f"task {task!r} needs at least 2 classes, got {n_classes}")
        if mode not in ("trained", "averaged"):
            raise ConfigError(f"unknown class embedding mode {mode!r}")
        existing = self._class_embeddings.get(task)
        if existing is not None:
            if existing.values.shape[:2] != (n_classes, n_vars):
                raise ConfigError(
                    f"class embeddings of {task!r} are {existing.values.shape}, "
                    f"requested {n_classes} classes × {n_vars} variables"
                )
            return existing
        values = self._factory.normal(
            f"class_embeddings.{task}", (n_classes, n_vars, self.config.d_model)
        )
        emb = ClassEmbeddings(task, values, mode)
        self._class_embeddings[task] = emb
        return emb

    def class_embeddings(self, task: str) -> ClassEmbeddings:
        try:
            return self._class_embeddings[task]
        except KeyError:
            raise RegistryError(f"no class embeddings for task: {task}") from None

    def set_class_embeddings(self, task: str, values: np.ndarray) -> ClassEmbeddings:
        """Overwrite a task's class embeddings in place (averaged mode)."""

        emb = self.class_embeddings(task)
        values = np.asarray(values, dtype=emb.values.dtype)
        if values.shape != emb.values.shape:
            raise ConfigError(
                f"class embeddings of {task!r} are {emb.values.shape}, got {values.shape}"
            )
        emb.values.data = values.copy()
        return emb

    def class_modes(self) -> dict[str, ClassMode]:
        return {task: emb.mode for task, emb in sorted(self._class_embeddings.items())}

    def tasks(self) -> list[str]:
        return sorted(self._class_embeddings)

    # -- forward -------------------------------------------------------------------------

    def sample_tokens(self, x: np.ndarray | Tensor) -> Tensor:
        """Patch tokens of a (B, t, v) series without positions (added by `encode`)."""

        return patchify(x, self.embedding, with_positions=False)

    def encode(self, tokens: SegmentedTokens) -> SegmentedTokens:
        return backbone_forward(add_positions(tokens, self.embedding), self.backbone)

    def drop_pretrain_tower(self) -> list[str]:
        removed = self.registry.remove(PRETRAIN_TOWER_PREFIX)
        self.pretrain_gen_tower = None
        if removed:
            logger.info("removed pretraining GEN tower (%d tensors)", len(removed))
        return removed
