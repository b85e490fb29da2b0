"""Dense tensors and the reverse-mode tape.

A `Tensor` wraps a NumPy array. Differentiable operations in `units.tensor.ops` append
a record to the tape that is active on the current thread (see `Tape.__enter__`); outside
a tape nothing is recorded and operations are plain array computations.

`Tape.backward` replays the records in exact reverse recording order, so gradients are
bit-reproducible for identical inputs.
"""

from __future__ import annotations

import threading
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Optional

import numpy as np

from units.errors import ContractError, TapeStateError

BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

DEFAULT_DTYPE = np.float64

_active = threading.local()


class Tensor:
    __slots__ = ("data", "requires_grad", "grad", "_is_leaf", "name")

    data: np.ndarray
    requires_grad: bool
    grad: Optional[np.ndarray]

    def __init__(
        self,
        data: np.ndarray | Sequence[float] | float,
        *,
        requires_grad: bool = False,
        dtype: np.dtype | type | None = None,
        name: str | None = None,
    ) -> None:
        array = np.asarray(data) if dtype is None else np.asarray(data, dtype=dtype)
        if not np.issubdtype(array.dtype, np.floating):
            array = array.astype(DEFAULT_DTYPE)
        self.data = array
        self.requires_grad = requires_grad
        self.grad = None
        self._is_leaf = True
        self.name = name

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self) -> np.dtype:
        return self.data.dtype

    @property
    def is_leaf(self) -> bool:
        return self._is_leaf

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ContractError(f"item() needs a single-element tensor, got shape {self.shape}")
        return float(self.data.reshape(-1)[0])

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self) -> str:
        label = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"


@dataclass(frozen=True, slots=True)
class TapeRecord:
    inputs: tuple[Tensor, ...]
    output: Tensor
    backward: BackwardFn
    op: str


class Tape:
    """Ordered record of differentiable operations for one training step.

    Use as a context manager; operations executed inside the block are recorded.
    `backward` may run once per recording; call `reset` before reusing the tape.
    """

    def __init__(self) -> None:
        self._records: list[TapeRecord] = []
        self._consumed = False
        self._previous: Optional[Tape] = None

    def __enter__(self) -> Tape:
        self._previous = getattr(_active, "tape", None)
        _active.tape = self
        return self

    def __exit__(self, *exc: object) -> None:
        _active.tape = self._previous
        self._previous = None

    def __len__(self) -> int:
        return len(self._records)

    @property
    def records(self) -> tuple[TapeRecord, ...]:
        return tuple(self._records)

    def record(
        self, op: str, inputs: Sequence[Tensor], output: Tensor, backward: BackwardFn
    ) -> None:
        if self._consumed:
            raise TapeStateError("tape already replayed; call reset() before recording again")
        output._is_leaf = False
        self._records.append(TapeRecord(tuple(inputs), output, backward, op))

    def reset(self) -> None:
        self._records.clear()
        self._consumed = False

    def backward(self, loss: Tensor) -> None:
        if loss.data.size != 1:
            raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
        if self._consumed:
            raise TapeStateError("backward already ran on this tape; call reset() first")
        if not self._records:
            raise TapeStateError("backward called on an empty tape")
        self._consumed = True

        grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
        for record in reversed(self._records):
            g_out = grads.pop(id(record.output), None)
            if g_out is None:
                continue
            g_inputs = record.backward(g_out)
            for tensor, g in zip(record.inputs, g_inputs):
                if g is None or not tensor.requires_grad:
                    continue
                if g.shape != tensor.shape:
                    raise TapeStateError(
                        f"{record.op}: gradient shape {g.shape} does not match {tensor.shape}"
                    )
                key = id(tensor)
                if key in grads:
                    grads[key] = grads[key] + g
                else:
                    grads[key] = g

        for record in self._records:
            for tensor in record.inputs:
                if not tensor.is_leaf or not tensor.requires_grad:
                    continue
                g = grads.pop(id(tensor), None)
                if g is None:
                    continue
                tensor.grad = g.copy() if tensor.grad is None else tensor.grad + g


def active_tape() -> Optional[Tape]:
    return getattr(_active, "tape", None)


def backward(loss: Tensor, tape: Optional[Tape] = None) -> None:
    """Populate `.grad` on every leaf reachable from `loss` through the active tape."""

    if tape is None:
        tape = active_tape()
    if tape is None:
        raise TapeStateError("no tape is active; wrap the forward pass in `with Tape():`")
    tape.backward(loss)
