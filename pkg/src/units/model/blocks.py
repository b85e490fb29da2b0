"""The backbone block: time MHSA, variable MHSA, Dynamic FFN and gates.

Tokens are (B, L, v, d). Time attention mixes along L within each variable; variable
attention mixes along v with one attention map per sample shared by every position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

from units.errors import ConfigError
from units.tensor import Tensor, ops

from .init import ParameterFactory
from .tokens import SegmentedTokens


@dataclass(frozen=True, slots=True)
class AttentionWeights:
    q_weight: Tensor
    q_bias: Tensor
    k_weight: Tensor
    k_bias: Tensor
    v_weight: Tensor
    v_bias: Tensor
    o_weight: Tensor
    o_bias: Tensor
    n_heads: int

    @property
    def d_model(self) -> int:
        return self.q_weight.shape[0]


@dataclass(frozen=True, slots=True)
class DyLinearOp:
    weight: Tensor
    bias: Tensor

    @property
    def base_shape(self) -> tuple[int, int]:
        return self.weight.shape


@dataclass(frozen=True, slots=True)
class DynamicFFN:
    conv_weight: Tensor
    conv_bias: Tensor
    prompt_op: DyLinearOp
    sample_op: DyLinearOp
    out_weight: Tensor
    out_bias: Tensor


@dataclass(frozen=True, slots=True)
class Gate:
    weight: Tensor
    bias: Tensor


@dataclass(frozen=True, slots=True)
class LayerNormWeights:
    gain: Tensor
    bias: Tensor


@dataclass(frozen=True, slots=True)
class UniTSBlock:
    time_attn: AttentionWeights
    var_attn: AttentionWeights
    ffn: DynamicFFN
    gates: tuple[Gate, Gate, Gate]
    norm1: LayerNormWeights
    norm2: LayerNormWeights


Backbone = tuple[UniTSBlock, ...]


def _heads(x: Tensor, n_heads: int) -> Tensor:
    # (..., L, d) -> (..., h, L, d/h)
    *lead, length, d = x.shape
    split = ops.reshape(x, (*lead, length, n_heads, d // n_heads))
    n = len(lead)
    return ops.transpose(split, (*range(n), n + 1, n, n + 2))


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, length, dh = x.shape
    n = len(lead)
    merged = ops.transpose(x, (*range(n), n + 1, n, n + 2))
    return ops.reshape(merged, (*lead, length, h * dh))


def _check_heads(w: AttentionWeights) -> None:
    if w.d_model % w.n_heads:
        raise ConfigError(f"d_model {w.d_model} is not divisible by n_heads {w.n_heads}")


def attention(query: Tensor, context: Tensor, w: AttentionWeights) -> Tensor:
    """Multi-head attention of `query` (..., Lq, d) over `context` (..., Lk, d)."""

    _check_heads(w)
    q = _heads(ops.linear(query, w.q_weight, w.q_bias), w.n_heads)
    k = _heads(ops.linear(context, w.k_weight, w.k_bias), w.n_heads)
    v = _heads(ops.linear(context, w.v_weight, w.v_bias), w.n_heads)
    scores = ops.scale(ops.matmul(q, ops.swap_last(k)), 1.0 / math.sqrt(q.shape[-1]))
    out = _merge_heads(ops.matmul(ops.softmax(scores, axis=-1), v))
    return ops.linear(out, w.o_weight, w.o_bias)


def time_mhsa(z: Tensor, w: AttentionWeights) -> Tensor:
    per_var = ops.transpose(z, (0, 2, 1, 3))
    return ops.transpose(attention(per_var, per_var, w), (0, 2, 1, 3))


def variable_mhsa(
    z: Tensor, w: AttentionWeights, *, return_attention: bool = False
) -> Tensor | tuple[Tensor, Tensor]:
    """Attention across variables with Q and K mean-pooled over time.

    The (B, h, v, v) map is computed once per sample and repeated explicitly over L, so
    every position uses the identical map. With `return_attention` the repeated
    (B, L, h, v, v) map is returned as well.
    """

    _check_heads(w)
    b, length, v, d = z.shape
    h = w.n_heads
    q = ops.mean(ops.linear(z, w.q_weight, w.q_bias), axis=1)
    k = ops.mean(ops.linear(z, w.k_weight, w.k_bias), axis=1)
    qh, kh = _heads(q, h), _heads(k, h)
    scores = ops.scale(ops.matmul(qh, ops.swap_last(kh)), 1.0 / math.sqrt(d // h))
    attn = ops.broadcast_to(
        ops.reshape(ops.softmax(scores, axis=-1), (b, 1, h, v, v)), (b, length, h, v, v)
    )
    values = _heads(ops.linear(z, w.v_weight, w.v_bias), h)
    mixed = _merge_heads(ops.matmul(attn, values))
    out = ops.linear(mixed, w.o_weight, w.o_bias)
    return (out, attn) if return_attention else out


def dylinear(z: Tensor, op: DyLinearOp, l_out: int) -> Tensor:
    """Mix (..., l_in, d) along the length axis with the base weight resized to l_out × l_in."""

    l_in = z.shape[-2]
    weight = ops.bilinear_resize(op.weight, l_out, l_in)
    bias = ops.resize_vector(op.bias, l_out)
    mixed = ops.linear(ops.swap_last(z), ops.transpose(weight, (1, 0)), bias)
    return ops.swap_last(mixed)


def dynamic_ffn(tokens: SegmentedTokens, ffn: DynamicFFN) -> SegmentedTokens:
    """Conv over time, then DyLinear on half of the channels, then an output projection.

    On the DyLinear half the prompt rows and the sample+gen rows each get their own
    operator; the CLS row passes through untouched.
    """

    d = tokens.data.shape[-1]
    if d % 2:
        raise ConfigError(f"dynamic FFN needs an even d_model, got {d}")
    spans = tokens.spans
    per_var = ops.transpose(tokens.data, (0, 2, 1, 3))
    mid = ops.conv1d_k3(per_var, ffn.conv_weight, ffn.conv_bias)
    routed, kept = ops.split(mid, -1, [d // 2, d // 2])

    body = spans.sample + spans.gen
    prompt, series, cls = ops.split(routed, 2, [spans.prompt, body, spans.cls])
    pieces = []
    if spans.prompt:
        pieces.append(dylinear(prompt, ffn.prompt_op, spans.prompt))
    if body:
        pieces.append(dylinear(series, ffn.sample_op, body))
    if spans.cls:
        pieces.append(cls)
    routed = ops.concat(pieces, axis=2)

    out = ops.linear(ops.concat([routed, kept], axis=-1), ffn.out_weight, ffn.out_bias)
    return tokens.with_data(ops.transpose(out, (0, 2, 1, 3)))


def gate(z: Tensor, g: Gate) -> Tensor:
    scores = ops.sigmoid(ops.linear(z, g.weight, g.bias))
    return ops.mul(ops.broadcast_to(scores, z.shape), z)


def _norm(z: Tensor, n: LayerNormWeights) -> Tensor:
    return ops.layer_norm(z, n.gain, n.bias)


def block_forward(tokens: SegmentedTokens, block: UniTSBlock) -> SegmentedTokens:
    z = tokens.data
    h = _norm(z, block.norm1)
    z = ops.add(z, gate(time_mhsa(h, block.time_attn), block.gates[0]))
    z = ops.add(z, gate(variable_mhsa(h, block.var_attn), block.gates[1]))
    ffn_in = tokens.with_data(_norm(z, block.norm2))
    z = ops.add(z, gate(dynamic_ffn(ffn_in, block.ffn).data, block.gates[2]))
    return tokens.with_data(z)


def backbone_forward(tokens: SegmentedTokens, backbone: Backbone) -> SegmentedTokens:
    for block in backbone:
        tokens = block_forward(tokens, block)
    return tokens


# -- construction --------------------------------------------------------------------------


def build_attention(
    factory: ParameterFactory, prefix: str, d: int, n_heads: int
) -> AttentionWeights:
    def proj(name: str) -> tuple[Tensor, Tensor]:
        return (
            factory.matrix(f"{prefix}.{name}.weight", d, d),
            factory.zeros(f"{prefix}.{name}.bias", (d,)),
        )

    q_w, q_b = proj("q")
    k_w, k_b = proj("k")
    v_w, v_b = proj("v")
    o_w = factory.zeros(f"{prefix}.o.weight", (d, d))
    o_b = factory.zeros(f"{prefix}.o.bias", (d,))
    return AttentionWeights(q_w, q_b, k_w, k_b, v_w, v_b, o_w, o_b, n_heads)


def build_dylinear(factory: ParameterFactory, prefix: str, base: int) -> DyLinearOp:
    return DyLinearOp(
        factory.matrix(f"{prefix}.weight", base, base), factory.zeros(f"{prefix}.bias", (base,))
    )


def build_block(
    factory: ParameterFactory, prefix: str, d: int, n_heads: int, dylinear_base: int
) -> UniTSBlock:
    ffn = DynamicFFN(
        conv_weight=factory.xavier(f"{prefix}.ffn.conv.weight", (3, d, d), 3 * d, 3 * d),
        conv_bias=factory.zeros(f"{prefix}.ffn.conv.bias", (d,)),
        prompt_op=build_dylinear(factory, f"{prefix}.ffn.dylinear_prompt", dylinear_base),
        sample_op=build_dylinear(factory, f"{prefix}.ffn.dylinear_sample", dylinear_base),
        out_weight=factory.matrix(f"{prefix}.ffn.out.weight", d, d),
        out_bias=factory.zeros(f"{prefix}.ffn.out.bias", (d,)),
    )
    gates = tuple(
        Gate(
            factory.zeros(f"{prefix}.gate{i}.weight", (d, 1)),
            factory.zeros(f"{prefix}.gate{i}.bias", (1,)),
        )
        for i in range(3)
    )
    return UniTSBlock(
        time_attn=build_attention(factory, f"{prefix}.time_attn", d, n_heads),
        var_attn=build_attention(factory, f"{prefix}.var_attn", d, n_heads),
        ffn=ffn,
        gates=gates,
        norm1=LayerNormWeights(
            factory.ones(f"{prefix}.norm1.gain", (d,)), factory.zeros(f"{prefix}.norm1.bias", (d,))
        ),
        norm2=LayerNormWeights(
            factory.ones(f"{prefix}.norm2.gain", (d,)), factory.zeros(f"{prefix}.norm2.bias", (d,))
        ),
    )


def build_backbone(
    factory: ParameterFactory, n_blocks: int, d: int, n_heads: int, dylinear_base: int
) -> Backbone:
    return tuple(
        build_block(factory, f"backbone.blocks.{i}", d, n_heads, dylinear_base)
        for i in range(n_blocks)
    )
