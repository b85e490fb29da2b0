from __future__ import annotations

import numpy as np
import pytest

from units.data import SplitFractions, make_synthetic, split_samples
from units.errors import ConfigError


class TestDeterminism:
    @pytest.mark.parametrize("kind", ["sine_forecast", "two_class", "spike_anomaly", "impute_sine"])
    def test_same_seed_same_arrays(self, kind: str) -> None:
        """A (kind, seed, params) triple always regenerates the same data."""
        a = make_synthetic(kind, 5, {"n_samples": 8, "window": 32}, patch_size=8)
        b = make_synthetic(kind, 5, {"n_samples": 8, "window": 32}, patch_size=8)
        np.testing.assert_array_equal(a.inputs, b.inputs)
        assert a.spec == b.spec

    def test_seed_matters(self) -> None:
        a = make_synthetic("sine_forecast", 0, {"n_samples": 4})
        b = make_synthetic("sine_forecast", 1, {"n_samples": 4})
        assert not np.array_equal(a.inputs, b.inputs)


class TestGenerators:
    def test_sine_forecast(self) -> None:
        data = make_synthetic(
            "sine_forecast",
            0,
            {"n_samples": 5, "window": 24, "n_vars": 3, "horizon_tokens": 3},
            patch_size=4,
        )
        assert data.kind == "forecast"
        assert data.inputs.shape == (5, 24, 3)
        assert data.targets.shape == (5, 12, 3)
        assert data.spec.horizon_tokens == 3

    def test_fixed_periods(self) -> None:
        """Noise-free sines with a fixed period repeat exactly every period."""
        data = make_synthetic(
            "sine_forecast", 0, {"n_samples": 2, "window": 40, "periods": [10.0], "noise": 0.0}
        )
        np.testing.assert_allclose(data.inputs[:, 10:], data.inputs[:, :-10], atol=1e-12)

    def test_two_class_balanced(self) -> None:
        data = make_synthetic("two_class", 0, {"n_samples": 20})
        assert data.spec.n_classes == 2
        assert np.bincount(data.labels).tolist() == [10, 10]

    def test_two_class_needs_even_count(self) -> None:
        with pytest.raises(ConfigError, match="even"):
            make_synthetic("two_class", 0, {"n_samples": 5})

    def test_spike_anomaly(self) -> None:
        """Spikes hit 5% of timesteps and are labeled where they land."""
        data = make_synthetic("spike_anomaly", 0, {"n_samples": 6, "window": 64})
        assert data.point_labels.shape == (6, 64)
        assert data.point_labels.sum(axis=1).tolist() == [3] * 6
        assert data.spec.anomaly_ratio == pytest.approx(3 / 64)
        spiky = np.abs(data.inputs[..., 0])[data.point_labels == 1]
        calm = np.abs(data.inputs[..., 0])[data.point_labels == 0]
        assert spiky.mean() > calm.mean()

    def test_spike_ratio_override(self) -> None:
        data = make_synthetic("spike_anomaly", 0, {"n_samples": 2, "anomaly_ratio": 0.1})
        assert data.spec.anomaly_ratio == 0.1

    def test_impute_masks_whole_patches(self) -> None:
        data = make_synthetic("impute_sine", 0, {"n_samples": 7, "window": 16}, patch_size=4)
        masks = data.masks.reshape(7, 4, 4)
        assert (masks.all(axis=2) | ~masks.any(axis=2)).all()
        assert data.masks.sum(axis=1).tolist() == [4] * 7

    def test_name_and_source(self) -> None:
        data = make_synthetic("two_class", 0, {"n_samples": 4}, name="pairs", source="shared")
        assert data.name == "pairs"
        assert data.source == "shared"

    @pytest.mark.parametrize(
        ("kind", "params"),
        [("noise", {}), ("two_class", {"bogus": 1}), ("sine_forecast", {"window": 0})],
    )
    def test_invalid(self, kind: str, params: dict) -> None:
        with pytest.raises(ConfigError):
            make_synthetic(kind, 0, params)


class TestSplitSamples:
    def test_contiguous_blocks(self) -> None:
        data = make_synthetic("two_class", 0, {"n_samples": 10})
        splits = split_samples(data, SplitFractions(0.6, 0.2, 0.2))
        assert [len(splits.train), len(splits.val), len(splits.test)] == [6, 2, 2]
        np.testing.assert_array_equal(splits.val.inputs, data.inputs[6:8])
        assert splits.test.split == "test"

    def test_empty_splits_are_dropped(self) -> None:
        data = make_synthetic("two_class", 0, {"n_samples": 4})
        splits = split_samples(data, SplitFractions(1.0, 0.0, 0.0))
        assert splits.val is None and splits.test is None
        assert len(splits.train) == 4
