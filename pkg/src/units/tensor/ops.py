"""Differentiable operations over `Tensor`.

Every operation checks shapes explicitly and raises `DimensionError` naming the shapes
involved. There is no implicit broadcasting: `linear`, `layer_norm` and `conv1d_k3` apply
their parameters over the last axis by definition, `scale` takes a Python scalar, and
anything else that needs a larger shape goes through `broadcast_to`.
"""

from __future__ import annotations

import math
import os
from collections.abc import Sequence

import numpy as np

from units.errors import ContractError, DimensionError

from .tensor import BackwardFn, Tensor, active_tape

_check_finite = os.environ.get("UNITS_CHECK_FINITE", "") == "1"

_GELU_C = math.sqrt(2.0 / math.pi)
LAYER_NORM_EPS = 1e-5


def set_check_finite(enabled: bool) -> None:
    """Toggle the NaN/Inf check on every forward result (off unless UNITS_CHECK_FINITE=1)."""

    global _check_finite
    _check_finite = enabled


def _result(op: str, inputs: Sequence[Tensor], data: np.ndarray, backward: BackwardFn) -> Tensor:
    if _check_finite and not np.all(np.isfinite(data)):
        raise ContractError(f"{op}: produced non-finite values")
    tape = active_tape()
    needs_grad = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=needs_grad)
    if needs_grad:
        tape.record(op, inputs, out, backward)
    return out


def _same_shape(op: str, a: Tensor, b: Tensor) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def _normalize_axis(op: str, axis: int, ndim: int) -> int:
    if not -ndim <= axis < ndim:
        raise DimensionError(f"{op}: axis {axis} out of range for rank {ndim}")
    return axis % ndim


def constant(data: np.ndarray | Sequence[float] | float, *, dtype=None) -> Tensor:
    return Tensor(data, dtype=dtype)


def parameter(data: np.ndarray, *, name: str | None = None) -> Tensor:
    return Tensor(np.array(data, copy=True), requires_grad=True, name=name)


def detach(x: Tensor) -> Tensor:
    return Tensor(x.data)


# -- elementwise ---------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("add", a, b)
    return _result("add", (a, b), a.data + b.data, lambda g: (g, g))


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("sub", a, b)
    return _result("sub", (a, b), a.data - b.data, lambda g: (g, -g))


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mul", a, b)
    a_data, b_data = a.data, b.data
    return _result("mul", (a, b), a_data * b_data, lambda g: (g * b_data, g * a_data))


def scale(x: Tensor, factor: float) -> Tensor:
    factor = float(factor)
    return _result("scale", (x,), x.data * factor, lambda g: (g * factor,))


def sigmoid(x: Tensor) -> Tensor:
    s = 0.5 * (1.0 + np.tanh(0.5 * x.data))
    return _result("sigmoid", (x,), s, lambda g: (g * s * (1.0 - s),))


def gelu(x: Tensor) -> Tensor:
    """Tanh approximation of GELU."""

    v = x.data
    t = np.tanh(_GELU_C * (v + 0.044715 * v**3))
    out = 0.5 * v * (1.0 + t)

    def backward(g: np.ndarray):
        du = _GELU_C * (1.0 + 3.0 * 0.044715 * v**2)
        return (g * (0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du),)

    return _result("gelu", (x,), out, backward)


def where(mask: np.ndarray, a: Tensor, b: Tensor) -> Tensor:
    """Take `a` where `mask` is true and `b` elsewhere; `mask` is a constant boolean array."""

    _same_shape("where", a, b)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise DimensionError(f"where: mask shape {mask.shape} differs from {a.shape}")
    return _result(
        "where",
        (a, b),
        np.where(mask, a.data, b.data),
        lambda g: (np.where(mask, g, 0.0), np.where(mask, 0.0, g)),
    )


# -- reductions ----------------------------------------------------------------------------


def _axes(op: str, axis: int | tuple[int, ...] | None, ndim: int) -> tuple[int, ...]:
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(sorted(_normalize_axis(op, a, ndim) for a in axis))


def reduce_sum(
    x: Tensor, axis: int | tuple[int, ...] | None = None, *, keepdims: bool = False
) -> Tensor:
    axes = _axes("sum", axis, x.ndim)
    shape = x.shape

    def backward(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, shape).copy(),)

    return _result("sum", (x,), np.sum(x.data, axis=axes, keepdims=keepdims), backward)


def mean(x: Tensor, axis: int | tuple[int, ...] | None = None, *, keepdims: bool = False) -> Tensor:
    axes = _axes("mean", axis, x.ndim)
    count = math.prod(x.shape[a] for a in axes)
    shape = x.shape

    def backward(g: np.ndarray):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / count, shape).copy(),)

    return _result("mean", (x,), np.mean(x.data, axis=axes, keepdims=keepdims), backward)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    axis = _normalize_axis("softmax", axis, x.ndim)
    shifted = x.data - np.max(x.data, axis=axis, keepdims=True)
    e = np.exp(shifted)
    s = e / np.sum(e, axis=axis, keepdims=True)

    def backward(g: np.ndarray):
        return (s * (g - np.sum(g * s, axis=axis, keepdims=True)),)

    return _result("softmax", (x,), s, backward)


# -- linear algebra ------------------------------------------------------------------------


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """Matrix product over the last two axes; leading (batch) axes must match exactly."""

    if a.ndim < 2 or b.ndim < 2 or a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply shapes {a.shape} and {b.shape}")
    a_data, b_data = a.data, b.data

    def backward(g: np.ndarray):
        return (g @ np.swapaxes(b_data, -1, -2), np.swapaxes(a_data, -1, -2) @ g)

    return _result("matmul", (a, b), a_data @ b_data, backward)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """Apply `x @ weight + bias` over the last axis of `x` (weight is in × out)."""

    if weight.ndim != 2 or x.shape[-1] != weight.shape[0]:
        raise DimensionError(f"linear: input {x.shape} does not fit weight {weight.shape}")
    if bias is not None and bias.shape != (weight.shape[1],):
        raise DimensionError(f"linear: bias {bias.shape} does not fit weight {weight.shape}")
    x_data, w_data = x.data, weight.data
    out = x_data @ w_data
    if bias is not None:
        out = out + bias.data
    n_in, n_out = w_data.shape

    def backward(g: np.ndarray):
        flat_g = g.reshape(-1, n_out)
        grads = [g @ w_data.T, x_data.reshape(-1, n_in).T @ flat_g]
        if bias is not None:
            grads.append(flat_g.sum(axis=0))
        return grads

    inputs = (x, weight) if bias is None else (x, weight, bias)
    return _result("linear", inputs, out, backward)


def _interp_matrix(out_len: int, in_len: int, dtype) -> np.ndarray:
    if out_len < 1 or in_len < 1:
        raise DimensionError(f"bilinear_resize: extents must be >= 1, got {in_len}->{out_len}")
    m = np.zeros((out_len, in_len), dtype=dtype)
    if in_len == 1 or out_len == 1:
        m[:, 0] = 1.0
        return m
    src = np.arange(out_len) * (in_len - 1) / (out_len - 1)
    lo = np.floor(src).astype(int)
    hi = np.minimum(lo + 1, in_len - 1)
    frac = src - lo
    rows = np.arange(out_len)
    np.add.at(m, (rows, lo), 1.0 - frac)
    np.add.at(m, (rows, hi), frac)
    return m


def bilinear_resize(w: Tensor, rows: int, cols: int) -> Tensor:
    """Corner-aligned bilinear resize of a matrix to `rows × cols`.

    Grid endpoints map onto the matrix corners, so resizing to the same shape is exact.
    """

    if w.ndim != 2 or min(w.shape) < 1:
        raise DimensionError(f"bilinear_resize: expected a non-empty matrix, got {w.shape}")
    r = _interp_matrix(rows, w.shape[0], w.dtype)
    c = _interp_matrix(cols, w.shape[1], w.dtype)
    return _result("bilinear_resize", (w,), r @ w.data @ c.T, lambda g: (r.T @ g @ c,))


def resize_vector(b: Tensor, length: int) -> Tensor:
    """Corner-aligned linear resize of a vector, the 1-D companion of `bilinear_resize`."""

    if b.ndim != 1 or b.shape[0] < 1:
        raise DimensionError(f"resize_vector: expected a non-empty vector, got {b.shape}")
    r = _interp_matrix(length, b.shape[0], b.dtype)
    return _result("resize_vector", (b,), r @ b.data, lambda g: (r.T @ g,))


# -- shape manipulation --------------------------------------------------------------------


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(axes) != list(range(x.ndim)):
        raise DimensionError(f"transpose: {axes} is not a permutation for shape {x.shape}")
    inverse = tuple(np.argsort(axes))
    return _result(
        "transpose", (x,), np.transpose(x.data, axes), lambda g: (np.transpose(g, inverse),)
    )


def swap_last(x: Tensor) -> Tensor:
    axes = list(range(x.ndim))
    axes[-1], axes[-2] = axes[-2], axes[-1]
    return transpose(x, axes)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if math.prod(shape) != x.data.size or any(s < 0 for s in shape):
        raise DimensionError(f"reshape: cannot view {x.shape} as {shape}")
    original = x.shape
    return _result("reshape", (x,), x.data.reshape(shape), lambda g: (g.reshape(original),))


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    """Repeat size-1 axes of `x` to reach `shape`; ranks must already agree."""

    shape = tuple(shape)
    if len(shape) != x.ndim or any(s != t and s != 1 for s, t in zip(x.shape, shape)):
        raise DimensionError(f"broadcast_to: cannot expand {x.shape} to {shape}")
    expanded = tuple(i for i, (s, t) in enumerate(zip(x.shape, shape)) if s != t)

    def backward(g: np.ndarray):
        return (np.sum(g, axis=expanded, keepdims=True) if expanded else g,)

    return _result("broadcast_to", (x,), np.broadcast_to(x.data, shape).copy(), backward)


def concat(xs: Sequence[Tensor], axis: int) -> Tensor:
    if not xs:
        raise DimensionError("concat: nothing to concatenate")
    axis = _normalize_axis("concat", axis, xs[0].ndim)
    for t in xs[1:]:
        if t.ndim != xs[0].ndim or any(
            s != r for i, (s, r) in enumerate(zip(t.shape, xs[0].shape)) if i != axis
        ):
            raise DimensionError(f"concat: shapes {xs[0].shape} and {t.shape} differ off axis")
    bounds = np.cumsum([t.shape[axis] for t in xs])[:-1]

    def backward(g: np.ndarray):
        return tuple(np.split(g, bounds, axis=axis))

    return _result("concat", tuple(xs), np.concatenate([t.data for t in xs], axis=axis), backward)


def slice_axis(x: Tensor, axis: int, start: int, stop: int) -> Tensor:
    axis = _normalize_axis("slice", axis, x.ndim)
    if not 0 <= start <= stop <= x.shape[axis]:
        raise DimensionError(f"slice: [{start}:{stop}] outside axis {axis} of {x.shape}")
    index = [slice(None)] * x.ndim
    index[axis] = slice(start, stop)
    key = tuple(index)
    shape, dtype = x.shape, x.dtype

    def backward(g: np.ndarray):
        full = np.zeros(shape, dtype=dtype)
        full[key] = g
        return (full,)

    return _result("slice", (x,), x.data[key].copy(), backward)


def split(x: Tensor, axis: int, sizes: Sequence[int]) -> list[Tensor]:
    axis = _normalize_axis("split", axis, x.ndim)
    if sum(sizes) != x.shape[axis] or any(s < 0 for s in sizes):
        raise DimensionError(f"split: sizes {list(sizes)} do not cover axis {axis} of {x.shape}")
    parts, start = [], 0
    for size in sizes:
        parts.append(slice_axis(x, axis, start, start + size))
        start += size
    return parts


# -- layers --------------------------------------------------------------------------------


def layer_norm(x: Tensor, gain: Tensor, bias: Tensor, eps: float = LAYER_NORM_EPS) -> Tensor:
    d = x.shape[-1]
    if gain.shape != (d,) or bias.shape != (d,):
        raise DimensionError(f"layer_norm: gain {gain.shape}/bias {bias.shape} vs input {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered**2).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    g_data = gain.data

    def backward(g: np.ndarray):
        gx_hat = g * g_data
        gx = (
            inv_std
            / d
            * (
                d * gx_hat
                - gx_hat.sum(axis=-1, keepdims=True)
                - xhat * (gx_hat * xhat).sum(axis=-1, keepdims=True)
            )
        )
        flat = g.reshape(-1, d)
        return gx, (flat * xhat.reshape(-1, d)).sum(axis=0), flat.sum(axis=0)

    return _result("layer_norm", (x, gain, bias), xhat * g_data + bias.data, backward)


def conv1d_k3(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
    """Kernel-3 convolution along axis -2 (time) of `x` (..., T, C_in), zero padded.

    `weight` is (3, C_in, C_out): tap 0 reads t-1, tap 1 reads t, tap 2 reads t+1.
    """

    if x.ndim < 2 or weight.ndim != 3 or weight.shape[0] != 3 or weight.shape[1] != x.shape[-1]:
        raise DimensionError(f"conv1d_k3: input {x.shape} does not fit weight {weight.shape}")
    c_in, c_out = weight.shape[1], weight.shape[2]
    if bias.shape != (c_out,):
        raise DimensionError(f"conv1d_k3: bias {bias.shape} does not fit weight {weight.shape}")
    t = x.shape[-2]
    pad = [(0, 0)] * (x.ndim - 2) + [(1, 1), (0, 0)]
    xp = np.pad(x.data, pad)
    w = weight.data
    taps = [xp[..., k : k + t, :] for k in range(3)]
    out = taps[0] @ w[0] + taps[1] @ w[1] + taps[2] @ w[2] + bias.data

    def backward(g: np.ndarray):
        flat_g = g.reshape(-1, c_out)
        gw = np.stack([tap.reshape(-1, c_in).T @ flat_g for tap in taps])
        gxp = np.zeros_like(xp)
        for k in range(3):
            gxp[..., k : k + t, :] += g @ w[k].T
        return gxp[..., 1 : t + 1, :], gw, flat_g.sum(axis=0)

    return _result("conv1d_k3", (x, weight, bias), out, backward)


# -- losses --------------------------------------------------------------------------------


def mse(a: Tensor, b: Tensor) -> Tensor:
    _same_shape("mse", a, b)
    diff = a.data - b.data
    n = diff.size

    def backward(g: np.ndarray):
        grad = g * 2.0 * diff / n
        return grad, -grad

    return _result("mse", (a, b), np.asarray(np.mean(diff**2)), backward)


def masked_mse(a: Tensor, b: Tensor, mask: np.ndarray) -> Tensor:
    """Mean squared error over the entries where `mask` is true."""

    _same_shape("masked_mse", a, b)
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != a.shape:
        raise DimensionError(f"masked_mse: mask shape {mask.shape} differs from {a.shape}")
    count = int(mask.sum())
    if count == 0:
        raise ContractError("masked_mse: mask selects no entries")
    diff = np.where(mask, a.data - b.data, 0.0)

    def backward(g: np.ndarray):
        grad = g * 2.0 * diff / count
        return grad, -grad

    return _result("masked_mse", (a, b), np.asarray(np.sum(diff**2) / count), backward)


def cross_entropy(logits: Tensor, labels: np.ndarray | Sequence[int]) -> Tensor:
    """Mean cross-entropy of (B, C) logits against integer labels."""

    labels = np.asarray(labels, dtype=int)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise DimensionError(f"cross_entropy: logits {logits.shape} vs labels {labels.shape}")
    if labels.size == 0:
        raise DimensionError("cross_entropy: empty batch")
    if labels.min() < 0 or labels.max() >= logits.shape[1]:
        raise ContractError(f"cross_entropy: labels outside [0, {logits.shape[1]})")
    shifted = logits.data - logits.data.max(axis=1, keepdims=True)
    log_z = np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    log_p = shifted - log_z
    rows = np.arange(labels.size)
    batch = labels.size

    def backward(g: np.ndarray):
        grad = np.exp(log_p)
        grad[rows, labels] -= 1.0
        return (g * grad / batch,)

    return _result("cross_entropy", (logits,), np.asarray(-log_p[rows, labels].mean()), backward)
