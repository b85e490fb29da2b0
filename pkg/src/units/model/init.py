from __future__ import annotations

import math

import numpy as np

from units.tensor import ParameterRegistry, Tensor
from units.util.rng import make_rng

TOKEN_INIT_STD = 0.02


class ParameterFactory:
    """Creates registry entries with initial values keyed by (seed, name).

    Each entry draws from its own Philox stream, so the value of a parameter does not
    depend on when it was created relative to others (token sets are added lazily).
    """

    def __init__(self, registry: ParameterRegistry, seed: int, dtype: np.dtype) -> None:
        self._registry = registry
        self._seed = seed
        self._dtype = dtype

    @property
    def registry(self) -> ParameterRegistry:
        return self._registry

    def _add(self, name: str, values: np.ndarray) -> Tensor:
        return self._registry.register(name, Tensor(values.astype(self._dtype), requires_grad=True))

    def zeros(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self._add(name, np.zeros(shape))

    def ones(self, name: str, shape: tuple[int, ...]) -> Tensor:
        return self._add(name, np.ones(shape))

    def normal(self, name: str, shape: tuple[int, ...], std: float = TOKEN_INIT_STD) -> Tensor:
        return self._add(name, make_rng(self._seed, name).normal(0.0, std, size=shape))

    def xavier(self, name: str, shape: tuple[int, ...], fan_in: int, fan_out: int) -> Tensor:
        limit = math.sqrt(6.0 / (fan_in + fan_out))
        return self._add(name, make_rng(self._seed, name).uniform(-limit, limit, size=shape))

    def matrix(self, name: str, n_in: int, n_out: int) -> Tensor:
        return self.xavier(name, (n_in, n_out), n_in, n_out)
