from __future__ import annotations

import math
from dataclasses import replace

import numpy as np
import pytest

from units.data import make_synthetic
from units.errors import ContractError, DataError
from units.model import ModelConfig, UniTSModel
from units.tasks import (
    anomaly_loss,
    classify_loss,
    forecast,
    forecast_loss,
    impute_loss,
    pretrain_loss,
    task_loss,
)
from units.tasks.pipelines import hidden_steps, phase_masks, reconstruct_output
from units.tensor import Tape
from units.util import make_rng

PATCH = 4
_PARAMS = {"n_samples": 6, "window": 16}


def _model(with_pretrain_tower: bool = True) -> UniTSModel:
    config = ModelConfig(
        n_blocks=1,
        d_model=8,
        patch_size=PATCH,
        n_heads=2,
        n_prompt_tokens=2,
        dylinear_base=6,
        max_positions=32,
        mlp_ratio=1,
    )
    return UniTSModel(config, with_pretrain_tower=with_pretrain_tower)


def _dataset(kind: str, **params):
    return make_synthetic(kind, 0, {**_PARAMS, **params}, patch_size=PATCH)


def _prepared(dataset, model: UniTSModel) -> UniTSModel:
    spec = dataset.spec
    model.add_token_set(spec.source, spec.n_vars)
    if spec.kind == "classify":
        model.add_class_embeddings(spec.name, spec.n_classes, spec.n_vars)
    return model


def _grads(model: UniTSModel, prefix: str) -> list[str]:
    return [n for n in model.registry.names(prefix) if model.registry[n].grad is not None]


class TestTaskLosses:
    def test_forecast_uses_context_statistics(self) -> None:
        """The loss equals the MSE of the normalized prediction against normalized targets."""
        data = _dataset("sine_forecast", horizon_tokens=1)
        model = _prepared(data, _model())
        batch = data.batch(np.arange(4))
        loss = forecast_loss(model, data.spec, batch).item()
        pred = forecast(model, batch.inputs, 1, source=data.source)
        std = batch.inputs.std(axis=1, keepdims=True)
        expected = np.mean(((pred - batch.targets) / std) ** 2)
        assert loss == pytest.approx(expected, rel=1e-9)

    def test_classify_with_equal_embeddings(self) -> None:
        """Identical class embeddings give a cross-entropy of log C."""
        data = _dataset("two_class")
        model = _prepared(data, _model())
        model.class_embeddings(data.name).values.data[...] = 0.25
        loss = classify_loss(model, data.spec, data.batch(np.arange(6))).item()
        assert loss == pytest.approx(math.log(2.0))

    def test_impute_gradient_reaches_tokens(self) -> None:
        """The GEN token substituted at masked patches receives a gradient."""
        data = _dataset("impute_sine")
        model = _prepared(data, _model())
        with Tape() as tape:
            loss = impute_loss(model, data.spec, data.batch(np.arange(3)), make_rng(0))
            tape.backward(loss)
        assert loss.item() > 0.0
        assert f"tokens.{data.source}.gen" in _grads(model, "tokens")

    def test_anomaly_scores_hidden_patches(self) -> None:
        """The anomaly loss is the error of the patches each sample's phase hides."""
        data = _dataset("spike_anomaly")
        model = _prepared(data, _model())
        batch = data.batch(np.arange(3))
        loss = anomaly_loss(model, data.spec, batch, make_rng(4)).item()
        phases = phase_masks(16 // PATCH)
        hidden = phases[make_rng(4).integers(len(phases), size=3)]
        recon = reconstruct_output(model, batch.inputs, data.source, hidden).data
        steps = hidden_steps(hidden, PATCH, 16)
        assert loss == pytest.approx(((batch.inputs - recon) ** 2)[steps].mean(), rel=1e-9)

    def test_dispatch_by_kind(self) -> None:
        """task_loss picks the loss of the task kind."""
        data = _dataset("two_class")
        model = _prepared(data, _model())
        batch = data.batch(np.arange(2))
        assert task_loss(model, data.spec, batch, make_rng(0)).item() == pytest.approx(
            classify_loss(model, data.spec, batch).item()
        )

    def test_missing_targets(self) -> None:
        """A forecast batch without targets is a data error."""
        data = _dataset("sine_forecast")
        model = _prepared(data, _model())
        batch = replace(data.batch(np.arange(2)), targets=None)
        with pytest.raises(DataError):
            forecast_loss(model, data.spec, batch)


class TestPretrainLoss:
    def test_total_is_sum_of_terms(self) -> None:
        """The total is the GEN-tower term plus the CLS-path term."""
        data = _dataset("sine_forecast")
        model = _prepared(data, _model())
        out = pretrain_loss(model, data.inputs[:3], data.source, make_rng(1))
        assert out.total.item() == pytest.approx(out.gen_term + out.cls_term)
        assert out.gen_term > 0.0 and out.cls_term > 0.0

    def test_reaches_every_path(self) -> None:
        """Both GEN towers, the CLS tower, the backbone and the tokens get gradients."""
        data = _dataset("sine_forecast")
        model = _prepared(data, _model())
        with Tape() as tape:
            out = pretrain_loss(model, data.inputs[:2], data.source, make_rng(2), ratio=0.5)
            tape.backward(out.total)
        for prefix in ("towers.gen", "towers.gen_pretrain", "towers.cls", "backbone"):
            assert _grads(model, prefix), prefix
        assert f"tokens.{data.source}.cls" in _grads(model, "tokens")

    def test_reproducible(self) -> None:
        """The same stream draws the same masks and truncation."""
        data = _dataset("sine_forecast")
        model = _prepared(data, _model())
        a = pretrain_loss(model, data.inputs[:2], data.source, make_rng(3)).total.item()
        b = pretrain_loss(model, data.inputs[:2], data.source, make_rng(3)).total.item()
        assert a == b

    def test_needs_pretrain_tower(self) -> None:
        """Without the pretraining tower the loss cannot be built."""
        data = _dataset("sine_forecast")
        model = _prepared(data, _model(with_pretrain_tower=False))
        with pytest.raises(ContractError):
            pretrain_loss(model, data.inputs[:1], data.source, make_rng(0))

    def test_needs_two_patches(self) -> None:
        """A one-patch sample cannot be masked."""
        model = _model()
        model.add_token_set("s", 1)
        with pytest.raises(ContractError):
            pretrain_loss(model, np.ones((1, PATCH, 1)), "s", make_rng(0))
