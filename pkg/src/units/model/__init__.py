from __future__ import annotations

from .blocks import (
    AttentionWeights,
    Backbone,
    DyLinearOp,
    DynamicFFN,
    Gate,
    LayerNormWeights,
    UniTSBlock,
    attention,
    backbone_forward,
    block_forward,
    dylinear,
    dynamic_ffn,
    gate,
    time_mhsa,
    variable_mhsa,
)
from .config import ModelConfig
from .init import ParameterFactory
from .network import PRETRAIN_TOWER_PREFIX, SHARED_TOKEN_KEY, UniTSModel
from .tokens import (
    MaskPlan,
    PatchEmbedding,
    SegmentedTokens,
    Spans,
    TokenSet,
    add_positions,
    assemble_anomaly,
    assemble_classify,
    assemble_forecast,
    assemble_impute,
    block_masks,
    draw_scheme,
    draw_truncation,
    missing_mask,
    patchify,
    plan_mask,
    unpatchify,
)
from .towers import (
    ClassEmbeddings,
    ClsTower,
    GenTower,
    TowerMLP,
    average_class_embeddings,
    class_distances,
    class_logits,
    cls_tower,
    gen_tower,
    match_class,
)

__all__ = [
    "AttentionWeights",
    "Backbone",
    "ClassEmbeddings",
    "ClsTower",
    "DyLinearOp",
    "DynamicFFN",
    "Gate",
    "GenTower",
    "LayerNormWeights",
    "MaskPlan",
    "ModelConfig",
    "PRETRAIN_TOWER_PREFIX",
    "ParameterFactory",
    "PatchEmbedding",
    "SHARED_TOKEN_KEY",
    "SegmentedTokens",
    "Spans",
    "TokenSet",
    "TowerMLP",
    "UniTSBlock",
    "UniTSModel",
    "add_positions",
    "assemble_anomaly",
    "assemble_classify",
    "assemble_forecast",
    "assemble_impute",
    "attention",
    "average_class_embeddings",
    "backbone_forward",
    "block_forward",
    "block_masks",
    "class_distances",
    "class_logits",
    "cls_tower",
    "draw_scheme",
    "draw_truncation",
    "dylinear",
    "dynamic_ffn",
    "gate",
    "gen_tower",
    "match_class",
    "missing_mask",
    "patchify",
    "plan_mask",
    "time_mhsa",
    "unpatchify",
    "variable_mhsa",
]
