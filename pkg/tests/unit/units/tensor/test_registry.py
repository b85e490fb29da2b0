from __future__ import annotations

import numpy as np
import pytest

from units.errors import RegistryError
from units.tensor import ParameterRegistry, Tensor


@pytest.fixture
def registry() -> ParameterRegistry:
    reg = ParameterRegistry()
    reg.register("b.weight", Tensor(np.ones((2, 3))))
    reg.register("a.bias", Tensor(np.zeros(3)))
    reg.register("a.sub.weight", Tensor(np.full((2, 2), 2.0)))
    return reg


class TestParameterRegistry:
    def test_lexicographic_order(self, registry: ParameterRegistry) -> None:
        """Names iterate sorted regardless of registration order."""
        assert list(registry) == ["a.bias", "a.sub.weight", "b.weight"]

    def test_register_sets_name_and_grad(self, registry: ParameterRegistry) -> None:
        """Registered tensors are named and trainable."""
        t = registry["a.bias"]
        assert t.name == "a.bias"
        assert t.requires_grad

    @pytest.mark.parametrize("name", ["", ".a", "a.", "a..b"])
    def test_invalid_names(self, name: str) -> None:
        """Empty segments are rejected."""
        with pytest.raises(RegistryError):
            ParameterRegistry().register(name, Tensor([1.0]))

    def test_duplicate(self, registry: ParameterRegistry) -> None:
        """A name can only be registered once."""
        with pytest.raises(RegistryError):
            registry.register("a.bias", Tensor([1.0]))

    def test_unknown_lookup(self, registry: ParameterRegistry) -> None:
        """Unknown names raise a registry error."""
        with pytest.raises(RegistryError):
            registry["missing"]

    def test_prefix_matches_whole_segments(self, registry: ParameterRegistry) -> None:
        """`a` covers a.* but a prefix like `a.su` matches nothing."""
        assert registry.names("a") == ["a.bias", "a.sub.weight"]
        assert registry.names("a.su") == []

    def test_freeze_where(self, registry: ParameterRegistry) -> None:
        """Matching entries freeze, the rest become trainable."""
        registry.freeze_where(lambda n: n.startswith("a."))
        assert [n for n, _ in registry.trainable()] == ["b.weight"]
        assert not registry["a.bias"].requires_grad
        registry.freeze_where(lambda n: False)
        assert registry.count(trainable_only=True) == registry.count() == 13

    def test_remove(self, registry: ParameterRegistry) -> None:
        """Removing a prefix drops its entries and their frozen flags."""
        registry.set_frozen("a.bias", True)
        assert registry.remove("a") == ["a.bias", "a.sub.weight"]
        assert "a.bias" not in registry
        assert registry.frozen() == []

    def test_checksum_tracks_values(self, registry: ParameterRegistry) -> None:
        """The checksum changes when any value changes."""
        before = registry.checksum()
        registry["b.weight"].data[0, 0] = 5.0
        assert registry.checksum() != before

    def test_checksum_subset(self, registry: ParameterRegistry) -> None:
        """A subset checksum ignores entries outside the subset."""
        before = registry.checksum(["a.bias"])
        registry["b.weight"].data[:] = 7.0
        assert registry.checksum(["a.bias"]) == before

    def test_zero_grad(self, registry: ParameterRegistry) -> None:
        """zero_grad clears every gradient."""
        registry["a.bias"].grad = np.ones(3)
        registry.zero_grad()
        assert all(t.grad is None for _, t in registry.items())
