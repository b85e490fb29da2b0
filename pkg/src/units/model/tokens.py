"""Sample tokens, task tokens and the per-task token layouts.

All token tensors carry a leading batch axis: (B, L, v, d). Assembly is pure
concatenation/substitution; positional embeddings are added afterwards by
`add_positions` over the whole assembled sequence.
"""

from __future__ import annotations

import math
from collections.abc import Sequence
from dataclasses import dataclass
from typing import Literal

import numpy as np

from units.errors import ConfigError, ContractError, DimensionError
from units.tensor import Tensor, ops

Segment = Literal["prompt", "sample", "gen", "cls"]
MaskScheme = Literal["random", "right"]

MASK_RATIO_RANGE = (0.70, 0.80)
TRUNCATION_RANGE = (0.5, 1.0)


@dataclass(frozen=True, slots=True)
class PatchEmbedding:
    patch_size: int
    proj_weight: Tensor
    proj_bias: Tensor
    positions: Tensor
    unpatch_weight: Tensor
    unpatch_bias: Tensor

    @property
    def d_model(self) -> int:
        return self.proj_weight.shape[1]

    @property
    def max_positions(self) -> int:
        return self.positions.shape[0]

    def token_count(self, timesteps: int) -> int:
        return math.ceil(timesteps / self.patch_size)


@dataclass(frozen=True, slots=True)
class TokenSet:
    source: str
    prompt: Tensor | None
    gen: Tensor
    cls: Tensor

    @property
    def n_prompt(self) -> int:
        return 0 if self.prompt is None else self.prompt.shape[0]

    @property
    def n_vars(self) -> int:
        return self.gen.shape[1]

    def tensors(self) -> list[Tensor]:
        base = [self.gen, self.cls]
        return base if self.prompt is None else [self.prompt, *base]


@dataclass(frozen=True, slots=True)
class Spans:
    prompt: int = 0
    sample: int = 0
    gen: int = 0
    cls: int = 0

    def __post_init__(self) -> None:
        if min(self.prompt, self.sample, self.gen, self.cls) < 0 or self.cls > 1:
            raise ContractError(f"invalid spans {self}")

    @property
    def total(self) -> int:
        return self.prompt + self.sample + self.gen + self.cls

    def bounds(self, segment: Segment) -> tuple[int, int]:
        starts = {
            "prompt": 0,
            "sample": self.prompt,
            "gen": self.prompt + self.sample,
            "cls": self.prompt + self.sample + self.gen,
        }
        start = starts[segment]
        return start, start + getattr(self, segment)


@dataclass(frozen=True, slots=True)
class SegmentedTokens:
    data: Tensor
    spans: Spans

    def __post_init__(self) -> None:
        if self.data.ndim != 4 or self.data.shape[1] != self.spans.total:
            raise DimensionError(
                f"tokens {self.data.shape} do not match spans {self.spans} (total "
                f"{self.spans.total})"
            )

    @property
    def length(self) -> int:
        return self.spans.total

    @property
    def n_vars(self) -> int:
        return self.data.shape[2]

    def segment(self, name: Segment) -> Tensor:
        start, stop = self.spans.bounds(name)
        return ops.slice_axis(self.data, 1, start, stop)

    def with_data(self, data: Tensor) -> SegmentedTokens:
        return SegmentedTokens(data, self.spans)


@dataclass(frozen=True, slots=True)
class MaskPlan:
    scheme: MaskScheme
    indices: tuple[int, ...]
    ratio: float
    truncation: float = 1.0

    def as_mask(self, n_tokens: int) -> np.ndarray:
        mask = np.zeros(n_tokens, dtype=bool)
        mask[list(self.indices)] = True
        return mask


def _as_series(x: np.ndarray | Tensor) -> np.ndarray:
    data = x.data if isinstance(x, Tensor) else np.asarray(x)
    if data.ndim != 3:
        raise DimensionError(f"expected a (batch, time, variables) series, got {data.shape}")
    if data.shape[1] == 0:
        raise ContractError("empty input: the series has no timesteps")
    if data.shape[2] == 0:
        raise ContractError("empty input: the series has no variables")
    return data


def patchify(
    x: np.ndarray | Tensor, emb: PatchEmbedding, *, with_positions: bool = True
) -> Tensor:
    """Project non-overlapping patches of a (B, t, v) series to (B, s, v, d) tokens.

    A series whose length is not a multiple of the patch size is right-padded with zeros.
    With `with_positions`, positions 0..s-1 are added, shared across variables.
    """

    data = _as_series(x)
    b, t, v = data.shape
    k = emb.patch_size
    s = math.ceil(t / k)
    if s * k != t:
        data = np.pad(data, ((0, 0), (0, s * k - t), (0, 0)))
    patches = data.reshape(b, s, k, v).transpose(0, 1, 3, 2)
    tokens = ops.linear(
        Tensor(patches, dtype=emb.proj_weight.dtype), emb.proj_weight, emb.proj_bias
    )
    if with_positions:
        tokens = ops.add(tokens, _position_block(emb, 0, s, tokens.shape))
    return tokens


def unpatchify(tokens: Tensor, emb: PatchEmbedding, horizon: int | None = None) -> Tensor:
    """Project (B, n, v, d) tokens back to a (B, n·k, v) series, trimmed to `horizon`."""

    if tokens.ndim != 4 or tokens.shape[1] == 0:
        raise DimensionError(f"unpatchify: expected (B, n, v, d) tokens, got {tokens.shape}")
    b, n, v, _ = tokens.shape
    k = emb.patch_size
    patches = ops.linear(tokens, emb.unpatch_weight, emb.unpatch_bias)
    series = ops.reshape(ops.transpose(patches, (0, 1, 3, 2)), (b, n * k, v))
    if horizon is not None:
        if not 1 <= horizon <= n * k:
            raise ContractError(f"horizon {horizon} outside 1..{n * k}")
        if horizon < n * k:
            series = ops.slice_axis(series, 1, 0, horizon)
    return series


def _position_block(emb: PatchEmbedding, start: int, stop: int, shape: tuple[int, ...]) -> Tensor:
    if stop > emb.max_positions:
        raise ConfigError(
            f"sequence of {stop} tokens exceeds the positional table ({emb.max_positions})"
        )
    block = ops.slice_axis(emb.positions, 0, start, stop)
    block = ops.reshape(block, (1, stop - start, 1, emb.d_model))
    return ops.broadcast_to(block, shape)


def add_positions(tokens: SegmentedTokens, emb: PatchEmbedding) -> SegmentedTokens:
    data = tokens.data
    return tokens.with_data(ops.add(data, _position_block(emb, 0, tokens.length, data.shape)))


def _expand(token: Tensor, batch: int, length: int | None = None) -> Tensor:
    n, v, d = token.shape
    out = ops.reshape(token, (1, n, v, d))
    return ops.broadcast_to(out, (batch, length or n, v, d))


def _check_sample(sample: Tensor, ts: TokenSet) -> None:
    if sample.ndim != 4:
        raise DimensionError(f"sample tokens must be (B, s, v, d), got {sample.shape}")
    if sample.shape[2] != ts.n_vars or sample.shape[3] != ts.gen.shape[2]:
        raise DimensionError(
            f"sample tokens {sample.shape} do not fit token set {ts.source!r} "
            f"(v={ts.n_vars}, d={ts.gen.shape[2]})"
        )


def _with_prompt(sample: Tensor, ts: TokenSet, rest: Sequence[Tensor]) -> Tensor:
    pieces = [] if ts.prompt is None else [_expand(ts.prompt, sample.shape[0])]
    return ops.concat([*pieces, sample, *rest], axis=1)


def assemble_forecast(sample: Tensor, ts: TokenSet, horizon_tokens: int) -> SegmentedTokens:
    """Layout [prompt | sample | GEN × f]."""

    if horizon_tokens < 1:
        raise ContractError(f"forecast needs at least one GEN token, got f={horizon_tokens}")
    _check_sample(sample, ts)
    gen = ops.broadcast_to(
        ops.reshape(ts.gen, (1, 1, ts.n_vars, ts.gen.shape[2])),
        (sample.shape[0], horizon_tokens, ts.n_vars, ts.gen.shape[2]),
    )
    data = _with_prompt(sample, ts, [gen])
    return SegmentedTokens(data, Spans(ts.n_prompt, sample.shape[1], horizon_tokens, 0))


def assemble_classify(sample: Tensor, ts: TokenSet) -> SegmentedTokens:
    """Layout [prompt | sample | CLS]."""

    _check_sample(sample, ts)
    data = _with_prompt(sample, ts, [_expand(ts.cls, sample.shape[0])])
    return SegmentedTokens(data, Spans(ts.n_prompt, sample.shape[1], 0, 1))


def missing_mask(missing: np.ndarray | Sequence[int], batch: int, n_tokens: int) -> np.ndarray:
    """Normalize token indices or a (B, s) boolean array to a (B, s) boolean mask."""

    arr = np.asarray(missing)
    if arr.dtype == bool:
        if arr.shape == (n_tokens,):
            arr = np.broadcast_to(arr, (batch, n_tokens))
        if arr.shape != (batch, n_tokens):
            raise ContractError(f"missing mask {arr.shape} does not match ({batch}, {n_tokens})")
        return arr.copy()
    indices = arr.astype(int).reshape(-1)
    if indices.size and (indices.min() < 0 or indices.max() >= n_tokens):
        raise ContractError(f"missing token indices {indices.tolist()} outside 0..{n_tokens - 1}")
    mask = np.zeros((batch, n_tokens), dtype=bool)
    mask[:, indices] = True
    return mask


def assemble_impute(
    sample: Tensor, ts: TokenSet, missing: np.ndarray | Sequence[int]
) -> SegmentedTokens:
    """Layout [prompt | sample with GEN substituted at missing positions]."""

    _check_sample(sample, ts)
    b, s, v, d = sample.shape
    mask = missing_mask(missing, b, s)
    if mask.any():
        full = np.broadcast_to(mask[:, :, None, None], sample.shape)
        sample = ops.where(full, _expand(ts.gen, b, s), sample)
    return SegmentedTokens(_with_prompt(sample, ts, []), Spans(ts.n_prompt, s, 0, 0))


def assemble_anomaly(sample: Tensor, ts: TokenSet) -> SegmentedTokens:
    """Layout [prompt | sample]."""

    _check_sample(sample, ts)
    return SegmentedTokens(_with_prompt(sample, ts, []), Spans(ts.n_prompt, sample.shape[1], 0, 0))


def draw_scheme(rng: np.random.Generator) -> MaskScheme:
    return "random" if rng.random() < 0.5 else "right"


def plan_mask(
    n_tokens: int,
    scheme: MaskScheme,
    rng: np.random.Generator,
    *,
    ratio: float | None = None,
    truncation: float = 1.0,
) -> MaskPlan:
    """Choose which sample tokens to replace with the GEN token.

    The ratio is drawn from U[0.70, 0.80] unless forced; `round(ratio · s)` tokens are
    masked, uniformly without replacement (random) or as a suffix (right).
    """

    if n_tokens < 2:
        raise ContractError(f"masking needs at least 2 sample tokens, got {n_tokens}")
    if scheme not in ("random", "right"):
        raise ContractError(f"unknown mask scheme {scheme!r}")
    if ratio is None:
        ratio = float(rng.uniform(*MASK_RATIO_RANGE))
    count = min(n_tokens, int(math.floor(ratio * n_tokens + 0.5)))
    if scheme == "right":
        indices = tuple(range(n_tokens - count, n_tokens))
    else:
        indices = tuple(sorted(int(i) for i in rng.choice(n_tokens, size=count, replace=False)))
    return MaskPlan(scheme, indices, ratio, truncation)


def draw_truncation(n_tokens: int, rng: np.random.Generator) -> tuple[float, int]:
    """Draw a truncation fraction from U[0.5, 1.0]; return it with the kept token count."""

    fraction = float(rng.uniform(*TRUNCATION_RANGE))
    return fraction, max(2, min(n_tokens, int(math.floor(fraction * n_tokens + 0.5))))


def block_masks(
    rng: np.random.Generator, n: int, window: int, patch_size: int, ratio: float
) -> np.ndarray:
    """(n, window) timestep masks covering round(ratio · s) whole patches per row.

    At least one patch is masked and, when s > 1, at least one stays observed.
    """

    s = math.ceil(window / patch_size)
    count = min(s - 1 if s > 1 else 1, max(1, int(round(ratio * s))))
    masks = np.zeros((n, s * patch_size), dtype=bool)
    for i in range(n):
        for token in rng.choice(s, size=count, replace=False):
            masks[i, token * patch_size : (token + 1) * patch_size] = True
    return masks[:, :window]
