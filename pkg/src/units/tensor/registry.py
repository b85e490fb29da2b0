from __future__ import annotations

import hashlib
from collections.abc import Callable, Iterator

import numpy as np

from units.errors import RegistryError

from .tensor import Tensor


class ParameterRegistry:
    """Named trainable tensors keyed by dot-separated paths.

    Iteration is always lexicographic by name. Frozen entries keep `requires_grad=False`
    so the tape never produces gradients for them and optimizers skip them.
    """

    _params: dict[str, Tensor]
    _frozen: set[str]

    def __init__(self) -> None:
        self._params = {}
        self._frozen = set()

    def register(self, name: str, tensor: Tensor) -> Tensor:
        if not name or name.startswith(".") or name.endswith(".") or ".." in name:
            raise RegistryError(f"invalid parameter name: {name!r}")
        if name in self._params:
            raise RegistryError(f"parameter already registered: {name}")
        tensor.name = name
        tensor.requires_grad = True
        self._params[name] = tensor
        return tensor

    def __contains__(self, name: object) -> bool:
        return name in self._params

    def __getitem__(self, name: str) -> Tensor:
        try:
            return self._params[name]
        except KeyError:
            raise RegistryError(f"unknown parameter: {name}") from None

    def __len__(self) -> int:
        return len(self._params)

    def __iter__(self) -> Iterator[str]:
        return iter(self.names())

    def names(self, prefix: str = "") -> list[str]:
        return sorted(n for n in self._params if _under(n, prefix))

    def items(self) -> list[tuple[str, Tensor]]:
        return [(n, self._params[n]) for n in self.names()]

    def remove(self, prefix: str) -> list[str]:
        removed = self.names(prefix)
        for name in removed:
            del self._params[name]
            self._frozen.discard(name)
        return removed

    def is_frozen(self, name: str) -> bool:
        return name in self._frozen

    def set_frozen(self, name: str, frozen: bool) -> None:
        tensor = self[name]
        if frozen:
            self._frozen.add(name)
        else:
            self._frozen.discard(name)
        tensor.requires_grad = not frozen
        tensor.grad = None

    def freeze_where(self, predicate: Callable[[str], bool]) -> None:
        """Freeze every entry matching `predicate` and unfreeze all others."""

        for name in self.names():
            self.set_frozen(name, predicate(name))

    def trainable(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self.items() if n not in self._frozen]

    def frozen(self) -> list[tuple[str, Tensor]]:
        return [(n, t) for n, t in self.items() if n in self._frozen]

    def zero_grad(self) -> None:
        for tensor in self._params.values():
            tensor.grad = None

    def count(self, *, trainable_only: bool = False) -> int:
        entries = self.trainable() if trainable_only else self.items()
        return sum(t.data.size for _, t in entries)

    def checksum(self, names: list[str] | None = None) -> str:
        """SHA-256 over names, shapes and raw values, in registry order."""

        digest = hashlib.sha256()
        for name in self.names() if names is None else sorted(names):
            data = np.ascontiguousarray(self[name].data)
            digest.update(name.encode("utf-8"))
            digest.update(str(data.shape).encode("ascii"))
            digest.update(data.tobytes())
        return digest.hexdigest()


def _under(name: str, prefix: str) -> bool:
    return not prefix or name == prefix or name.startswith(prefix.rstrip(".") + ".")
