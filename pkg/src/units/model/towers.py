"""Shared output towers and class-embedding matching."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np

from units.errors import ContractError, DataError, DimensionError
from units.tensor import Tensor, ops

from .blocks import (
    AttentionWeights,
    DyLinearOp,
    attention,
    build_attention,
    build_dylinear,
    dylinear,
)
from .init import ParameterFactory
from .tokens import PatchEmbedding, SegmentedTokens, unpatchify

ClassMode = Literal["trained", "averaged"]


@dataclass(frozen=True, slots=True)
class TowerMLP:
    w1: Tensor
    b1: Tensor
    w2: Tensor
    b2: Tensor


@dataclass(frozen=True, slots=True)
class GenTower:
    dylinear: DyLinearOp
    mlp: TowerMLP
    embedding: PatchEmbedding


@dataclass(frozen=True, slots=True)
class ClsTower:
    attn: AttentionWeights
    mlp: TowerMLP


@dataclass(frozen=True, slots=True)
class ClassEmbeddings:
    task: str
    values: Tensor
    mode: ClassMode = "trained"

    @property
    def n_classes(self) -> int:
        return self.values.shape[0]


def mlp(z: Tensor, m: TowerMLP) -> Tensor:
    return ops.linear(ops.gelu(ops.linear(z, m.w1, m.b1)), m.w2, m.b2)


def gen_tower(
    tokens: SegmentedTokens,
    tower: GenTower,
    target: Literal["gen", "sample"],
    horizon: int | None = None,
) -> Tensor:
    """Decode the `target` rows of the sequence into a (B, n·k, v) series.

    The whole sequence goes through the length-preserving DyLinear and the residual MLP;
    only the target rows are unpatchified.
    """

    start, stop = tokens.spans.bounds(target)
    if stop == start:
        raise ContractError(f"gen tower: the {target} segment is empty")
    per_var = ops.transpose(tokens.data, (0, 2, 1, 3))
    mixed = ops.add(per_var, dylinear(per_var, tower.dylinear, tokens.length))
    y = ops.transpose(mixed, (0, 2, 1, 3))
    y = ops.add(y, mlp(y, tower.mlp))
    return unpatchify(ops.slice_axis(y, 1, start, stop), tower.embedding, horizon)


def cls_tower(tokens: SegmentedTokens, tower: ClsTower) -> Tensor:
    """Refine the CLS row by cross-attending over the whole sequence; returns (B, 1, v, d)."""

    if tokens.spans.cls != 1:
        raise ContractError("cls tower: the sequence has no CLS segment")
    per_var = ops.transpose(tokens.data, (0, 2, 1, 3))
    query = ops.slice_axis(per_var, 2, tokens.length - 1, tokens.length)
    refined = ops.add(query, attention(query, per_var, tower.attn))
    refined = ops.add(refined, mlp(refined, tower.mlp))
    return ops.transpose(refined, (0, 2, 1, 3))


def _cls_array(z_c: np.ndarray | Tensor) -> np.ndarray:
    data = z_c.data if isinstance(z_c, Tensor) else np.asarray(z_c)
    return data.reshape(data.shape[-2:]) if data.ndim == 3 and data.shape[0] == 1 else data


def class_distances(z_c: np.ndarray | Tensor, embeddings: np.ndarray | Tensor) -> np.ndarray:
    """Squared Euclidean distance from one CLS token (v × d) to every class embedding."""

    token = _cls_array(z_c)
    table = embeddings.data if isinstance(embeddings, Tensor) else np.asarray(embeddings)
    if table.ndim != 3 or table.shape[1:] != token.shape:
        raise DimensionError(f"CLS token {token.shape} does not fit class embeddings {table.shape}")
    return np.sum((table - token[None]) ** 2, axis=(1, 2))


def match_class(z_c: np.ndarray | Tensor, emb: ClassEmbeddings | np.ndarray) -> int:
    """Index of the nearest class embedding; ties go to the lowest index."""

    table = emb.values if isinstance(emb, ClassEmbeddings) else emb
    return int(np.argmin(class_distances(z_c, table)))


def class_logits(z_c: Tensor, embeddings: Tensor) -> Tensor:
    """Negative squared distances (B, C) between CLS tokens (B, 1, v, d) and (C, v, d)."""

    b = z_c.shape[0]
    c, v, d = embeddings.shape
    if z_c.shape != (b, 1, v, d):
        raise DimensionError(
            f"CLS tokens {z_c.shape} do not fit class embeddings {embeddings.shape}"
        )
    tokens = ops.broadcast_to(z_c, (b, c, v, d))
    table = ops.broadcast_to(ops.reshape(embeddings, (1, c, v, d)), (b, c, v, d))
    diff = ops.sub(tokens, table)
    return ops.scale(ops.reduce_sum(ops.mul(diff, diff), axis=(2, 3)), -1.0)


def average_class_embeddings(
    cls_tokens: np.ndarray, labels: np.ndarray, n_classes: int
) -> np.ndarray:
    """Per-class mean of output CLS tokens (N, v, d) or (N, 1, v, d); returns (C, v, d)."""

    tokens = np.asarray(cls_tokens)
    if tokens.ndim == 4:
        tokens = tokens[:, 0]
    labels = np.asarray(labels, dtype=int)
    if tokens.ndim != 3 or labels.shape != (tokens.shape[0],):
        raise DimensionError(f"CLS tokens {tokens.shape} do not pair with labels {labels.shape}")
    out = np.empty((n_classes, *tokens.shape[1:]), dtype=tokens.dtype)
    for c in range(n_classes):
        members = tokens[labels == c]
        if not len(members):
            raise DataError(f"class {c} has no training samples to average")
        out[c] = members.mean(axis=0)
    return out


# -- construction --------------------------------------------------------------------------


def build_mlp(factory: ParameterFactory, prefix: str, d: int, hidden: int) -> TowerMLP:
    return TowerMLP(
        factory.matrix(f"{prefix}.mlp.fc1.weight", d, hidden),
        factory.zeros(f"{prefix}.mlp.fc1.bias", (hidden,)),
        factory.matrix(f"{prefix}.mlp.fc2.weight", hidden, d),
        factory.zeros(f"{prefix}.mlp.fc2.bias", (d,)),
    )


def build_gen_tower(
    factory: ParameterFactory, prefix: str, embedding: PatchEmbedding, base: int, hidden: int
) -> GenTower:
    return GenTower(
        dylinear=build_dylinear(factory, f"{prefix}.dylinear", base),
        mlp=build_mlp(factory, prefix, embedding.d_model, hidden),
        embedding=embedding,
    )


def build_cls_tower(
    factory: ParameterFactory, prefix: str, d: int, n_heads: int, hidden: int
) -> ClsTower:
    return ClsTower(
        attn=build_attention(factory, f"{prefix}.attn", d, n_heads),
        mlp=build_mlp(factory, prefix, d, hidden),
    )
