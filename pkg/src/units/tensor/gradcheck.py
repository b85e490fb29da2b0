"""Central finite-difference checks of tape gradients."""

from __future__ import annotations

import logging
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .tensor import Tape, Tensor

logger = logging.getLogger(__name__)


@dataclass(frozen=True, slots=True)
class GradientReport:
    name: str
    max_relative_error: float
    max_abs_gradient: float


def numerical_gradient(
    loss_fn: Callable[[], Tensor], param: Tensor, h: float = 1e-5
) -> np.ndarray:
    param.data = np.ascontiguousarray(param.data)
    grad = np.zeros_like(param.data)
    flat = param.data.reshape(-1)
    out = grad.reshape(-1)
    for j in range(flat.size):
        saved = flat[j]
        flat[j] = saved + h
        f_plus = loss_fn().item()
        flat[j] = saved - h
        f_minus = loss_fn().item()
        flat[j] = saved
        out[j] = (f_plus - f_minus) / (2.0 * h)
    return grad


def check_gradients(
    loss_fn: Callable[[], Tensor],
    params: Sequence[Tensor],
    *,
    h: float = 1e-5,
    floor: float = 1e-4,
) -> list[GradientReport]:
    """Compare analytic gradients of `loss_fn` against central differences.

    The relative error of an entry is |analytic - numeric| / max(|analytic|, |numeric|,
    floor); the floor keeps near-zero entries from reporting round-off as error.
    """

    for p in params:
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)

    reports = []
    for index, p in enumerate(params):
        analytic = np.zeros_like(p.data) if p.grad is None else p.grad.copy()
        numeric = numerical_gradient(loss_fn, p, h)
        denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), floor)
        rel = float(np.max(np.abs(analytic - numeric) / denom)) if p.data.size else 0.0
        name = p.name or f"param[{index}]"
        logger.debug("gradient check %s: max relative error %.3e", name, rel)
        reports.append(GradientReport(name, rel, float(np.max(np.abs(analytic), initial=0.0))))
    return reports
