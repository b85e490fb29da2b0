"""Finite-difference checks of every parameter of a whole one-block model."""

from __future__ import annotations

import numpy as np
import pytest

from units.model import ModelConfig, UniTSModel, class_logits
from units.tasks.pipelines import classify_tokens, forecast_output
from units.tensor import GradientReport, Tensor, check_gradients, ops

CONFIG = ModelConfig(
    n_blocks=1,
    d_model=8,
    patch_size=4,
    n_heads=2,
    n_prompt_tokens=2,
    dylinear_base=4,
    max_positions=8,
)
TOLERANCE = 1e-4


@pytest.fixture(scope="module")
def model() -> UniTSModel:
    model = UniTSModel(CONFIG, with_pretrain_tower=False)
    model.add_token_set("s", 2)
    model.add_class_embeddings("s", 3, 2)
    # zero-initialized branches would make most gradients vanish
    rng = np.random.default_rng(0)
    for _, tensor in model.registry.items():
        tensor.data = tensor.data + rng.normal(0.0, 0.2, size=tensor.shape)
    return model


def _params(model: UniTSModel, *skip: str) -> list[Tensor]:
    return [t for name, t in model.registry.items() if not name.startswith(skip)]


def _assert_reports(reports: list[GradientReport]) -> None:
    failures = {r.name: r.max_relative_error for r in reports if r.max_relative_error > TOLERANCE}
    assert not failures


def test_forecast_head(model: UniTSModel) -> None:
    """8 tokens (2 prompt, 4 sample, 2 GEN), 2 variables, MSE against a fixed target."""
    rng = np.random.default_rng(1)
    x = rng.normal(size=(2, 16, 2))
    target = Tensor(rng.normal(size=(2, 8, 2)))

    def loss() -> Tensor:
        return ops.mse(forecast_output(model, x, "s", 2), target)

    params = _params(model, "towers.cls", "class_embeddings", "tokens.s.cls")
    reports = check_gradients(loss, params)
    assert len(reports) > 10
    assert any(r.max_abs_gradient > 0 for r in reports if r.name.startswith("backbone"))
    _assert_reports(reports)


def test_classification_head(model: UniTSModel) -> None:
    """Cross-entropy over class-embedding distances through the CLS tower."""
    x = np.random.default_rng(2).normal(size=(2, 12, 2))

    def loss() -> Tensor:
        logits = class_logits(classify_tokens(model, x, "s"), model.class_embeddings("s").values)
        return ops.cross_entropy(logits, np.array([0, 2]))

    reports = check_gradients(loss, _params(model, "towers.gen", "tokens.s.gen"))
    _assert_reports(reports)
