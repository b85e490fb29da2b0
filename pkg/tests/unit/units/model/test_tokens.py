from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from units.errors import ConfigError, ContractError, DimensionError
from units.model import (
    PatchEmbedding,
    TokenSet,
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
from units.tensor import Tape, Tensor, ops
from units.util import make_rng


def _identity_embedding(k: int, max_positions: int = 16) -> PatchEmbedding:
    return PatchEmbedding(
        patch_size=k,
        proj_weight=Tensor(np.eye(k)),
        proj_bias=Tensor(np.zeros(k)),
        positions=Tensor(np.arange(max_positions * k, dtype=float).reshape(max_positions, k)),
        unpatch_weight=Tensor(np.eye(k)),
        unpatch_bias=Tensor(np.zeros(k)),
    )


def _token_set(v: int, d: int, p: int, seed: int = 0) -> TokenSet:
    rng = np.random.default_rng(seed)
    return TokenSet(
        source="fake",
        prompt=Tensor(rng.normal(size=(p, v, d))) if p else None,
        gen=Tensor(rng.normal(size=(1, v, d))),
        cls=Tensor(rng.normal(size=(1, v, d))),
    )


class TestPatchify:
    def test_token_count(self) -> None:
        """t=10 with k=4 yields three tokens per variable."""
        x = np.random.default_rng(0).normal(size=(2, 10, 3))
        tokens = patchify(x, _identity_embedding(4), with_positions=False)
        assert tokens.shape == (2, 3, 3, 4)

    def test_patch_contents(self) -> None:
        """Under an identity projection each token is its variable's patch."""
        x = np.arange(16, dtype=float).reshape(1, 8, 2)
        tokens = patchify(x, _identity_embedding(4), with_positions=False)
        np.testing.assert_array_equal(tokens.data[0, 1, 0], x[0, 4:8, 0])
        np.testing.assert_array_equal(tokens.data[0, 0, 1], x[0, 0:4, 1])

    @pytest.mark.parametrize("t", [8, 9, 11, 12])
    def test_round_trip_with_padding(self, t: int) -> None:
        """unpatchify(patchify(x)) reproduces x on its first t steps."""
        x = np.random.default_rng(t).normal(size=(2, t, 3))
        emb = _identity_embedding(4)
        back = unpatchify(patchify(x, emb, with_positions=False), emb, horizon=t)
        np.testing.assert_allclose(back.data, x, atol=1e-12)

    def test_positions_shared_across_variables(self) -> None:
        """Every variable of token i receives positional row i."""
        emb = _identity_embedding(2)
        tokens = patchify(np.zeros((1, 4, 3)), emb)
        for var in range(3):
            np.testing.assert_array_equal(tokens.data[0, :, var], emb.positions.data[:2])

    def test_empty_series(self) -> None:
        """A series without timesteps is a contract error."""
        with pytest.raises(ContractError, match="empty"):
            patchify(np.zeros((1, 0, 2)), _identity_embedding(2))

    def test_rank(self) -> None:
        """Only (B, t, v) input is accepted."""
        with pytest.raises(DimensionError):
            patchify(np.zeros((4, 2)), _identity_embedding(2))

    def test_position_table_overflow(self) -> None:
        """More tokens than positional rows is a configuration error."""
        with pytest.raises(ConfigError):
            patchify(np.zeros((1, 40, 1)), _identity_embedding(2, max_positions=4))

    def test_horizon_out_of_range(self) -> None:
        """A horizon longer than the decoded tokens is rejected."""
        emb = _identity_embedding(2)
        with pytest.raises(ContractError):
            unpatchify(Tensor(np.zeros((1, 2, 1, 2))), emb, horizon=5)


class TestAssembly:
    @settings(max_examples=25, deadline=None)
    @given(
        b=st.integers(1, 3),
        s=st.integers(1, 6),
        v=st.integers(1, 4),
        p=st.integers(0, 3),
        f=st.integers(1, 4),
    )
    def test_forecast_segments(self, b: int, s: int, v: int, p: int, f: int) -> None:
        """Spans cover the sequence and slice back to prompt, sample and GEN copies."""
        d = 4
        ts = _token_set(v, d, p)
        sample = Tensor(np.random.default_rng(s).normal(size=(b, s, v, d)))
        tokens = assemble_forecast(sample, ts, f)
        assert tokens.length == p + s + f
        assert tokens.data.shape == (b, p + s + f, v, d)
        np.testing.assert_array_equal(tokens.segment("sample").data, sample.data)
        np.testing.assert_array_equal(
            tokens.segment("gen").data, np.broadcast_to(ts.gen.data[None], (b, f, v, d))
        )
        if p:
            np.testing.assert_array_equal(
                tokens.segment("prompt").data, np.broadcast_to(ts.prompt.data, (b, p, v, d))
            )

    def test_classify_appends_cls(self) -> None:
        """The last row of a classify layout is the CLS token."""
        ts = _token_set(2, 4, 3)
        sample = Tensor(np.ones((2, 5, 2, 4)))
        tokens = assemble_classify(sample, ts)
        assert (tokens.spans.prompt, tokens.spans.sample, tokens.spans.cls) == (3, 5, 1)
        np.testing.assert_array_equal(tokens.segment("cls").data[1, 0], ts.cls.data[0])

    def test_impute_substitutes_gen(self) -> None:
        """Missing positions hold the GEN token; the others keep the sample."""
        ts = _token_set(2, 4, 1)
        sample = Tensor(np.random.default_rng(1).normal(size=(1, 4, 2, 4)))
        tokens = assemble_impute(sample, ts, [1, 3])
        body = tokens.segment("sample").data[0]
        np.testing.assert_array_equal(body[1], ts.gen.data[0])
        np.testing.assert_array_equal(body[3], ts.gen.data[0])
        np.testing.assert_array_equal(body[0], sample.data[0, 0])
        assert tokens.spans.gen == 0

    def test_anomaly_layout(self) -> None:
        """Anomaly layout is the prompt followed by the untouched sample."""
        ts = _token_set(1, 4, 2)
        sample = Tensor(np.ones((1, 3, 1, 4)))
        tokens = assemble_anomaly(sample, ts)
        assert tokens.length == 5
        np.testing.assert_array_equal(tokens.segment("sample").data, sample.data)

    def test_variable_mismatch(self) -> None:
        """Sample tokens with a different v than the token set are rejected."""
        with pytest.raises(DimensionError):
            assemble_anomaly(Tensor(np.ones((1, 3, 2, 4))), _token_set(3, 4, 0))

    def test_zero_horizon(self) -> None:
        """Forecasting needs at least one GEN token."""
        with pytest.raises(ContractError):
            assemble_forecast(Tensor(np.ones((1, 3, 1, 4))), _token_set(1, 4, 0), 0)

    def test_missing_mask_indices_out_of_range(self) -> None:
        """Token indices past the sample are rejected."""
        with pytest.raises(ContractError):
            missing_mask([4], 1, 4)

    def test_missing_mask_from_bools(self) -> None:
        """A (s,) boolean mask is repeated over the batch."""
        mask = missing_mask(np.array([True, False, True]), 2, 3)
        assert mask.shape == (2, 3)
        assert mask[1].tolist() == [True, False, True]

    def test_assembly_is_differentiable(self) -> None:
        """Gradients flow from the assembled sequence into the GEN token."""

        ts = _token_set(1, 2, 0)
        gen = Tensor(ts.gen.data, requires_grad=True)
        ts = TokenSet("fake", None, gen, ts.cls)
        with Tape() as tape:
            tokens = assemble_forecast(Tensor(np.zeros((1, 2, 1, 2))), ts, 3)
            tape.backward(ops.reduce_sum(tokens.data))
        np.testing.assert_array_equal(gen.grad, np.full((1, 1, 2), 3.0))


class TestMaskPlans:
    def test_right_scheme_is_suffix(self) -> None:
        """The right scheme masks a contiguous suffix."""
        plan = plan_mask(10, "right", make_rng(0), ratio=0.75)
        assert plan.indices == (2, 3, 4, 5, 6, 7, 8, 9)

    def test_random_count(self) -> None:
        """round(ratio · s) distinct tokens are masked."""
        plan = plan_mask(20, "random", make_rng(1), ratio=0.7)
        assert len(set(plan.indices)) == 14
        assert plan.as_mask(20).sum() == 14

    def test_too_short(self) -> None:
        """Masking needs two sample tokens."""
        with pytest.raises(ContractError):
            plan_mask(1, "random", make_rng(0))

    def test_unknown_scheme(self) -> None:
        """Only random and right schemes exist."""
        with pytest.raises(ContractError):
            plan_mask(4, "left", make_rng(0))  # type: ignore[arg-type]

    def test_distribution_over_many_draws(self) -> None:
        """Ratios stay in [0.70, 0.80], right masks are suffixes, schemes split evenly."""
        rng = make_rng(42, "mask-plans")
        right = 0
        for _ in range(10_000):
            scheme = draw_scheme(rng)
            plan = plan_mask(20, scheme, rng)
            assert 0.70 <= plan.ratio <= 0.80
            assert 0.70 <= len(plan.indices) / 20 <= 0.80
            if scheme == "right":
                right += 1
                assert plan.indices == tuple(range(20 - len(plan.indices), 20))
        assert 0.48 <= right / 10_000 <= 0.52

    def test_truncation_bounds(self) -> None:
        """Truncation keeps between two tokens and the full sample."""
        rng = make_rng(3)
        for n in (2, 3, 8, 31):
            for _ in range(50):
                fraction, kept = draw_truncation(n, rng)
                assert 0.5 <= fraction <= 1.0
                assert 2 <= kept <= n


class TestBlockMasks:
    def test_whole_patches(self) -> None:
        """Masks cover whole patches: each patch is all-true or all-false."""
        masks = block_masks(make_rng(0), 5, 32, 4, 0.25)
        patches = masks.reshape(5, 8, 4)
        assert np.all(patches.all(axis=2) == patches.any(axis=2))
        assert np.all(patches.all(axis=2).sum(axis=1) == 2)

    def test_keeps_an_observed_patch(self) -> None:
        """Even a ratio of one leaves an observed patch when s > 1."""
        masks = block_masks(make_rng(1), 3, 8, 4, 1.0)
        assert np.all(masks.sum(axis=1) == 4)

    def test_single_patch_masks_it(self) -> None:
        """A one-patch window is masked entirely."""
        assert block_masks(make_rng(2), 2, 3, 4, 0.1).all()

    def test_reproducible(self) -> None:
        """The same stream gives the same masks."""
        a = block_masks(make_rng(5, "x"), 4, 16, 4, 0.5)
        b = block_masks(make_rng(5, "x"), 4, 16, 4, 0.5)
        np.testing.assert_array_equal(a, b)
