"""Evaluation metrics over NumPy arrays, computed with scikit-learn."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from sklearn.metrics import (
    accuracy_score,
    mean_absolute_error,
    mean_squared_error,
    precision_recall_fscore_support,
)

from units.errors import DimensionError


@dataclass(frozen=True, slots=True)
class DetectionScores:
    precision: float
    recall: float
    f1: float


def _pair(y_true: np.ndarray, y_pred: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.asarray(y_true), np.asarray(y_pred)
    if a.shape != b.shape:
        raise DimensionError(f"metric inputs differ in shape: {a.shape} vs {b.shape}")
    return a.reshape(-1), b.reshape(-1)


def mse(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(mean_squared_error(*_pair(y_true, y_pred)))


def mae(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(mean_absolute_error(*_pair(y_true, y_pred)))


def accuracy(y_true: np.ndarray, y_pred: np.ndarray) -> float:
    return float(accuracy_score(*_pair(y_true, y_pred)))


def detection_scores(y_true: np.ndarray, y_pred: np.ndarray) -> DetectionScores:
    """Pointwise precision, recall and F1 of binary flags (no point adjustment)."""

    truth, pred = _pair(y_true, y_pred)
    precision, recall, f1, _ = precision_recall_fscore_support(
        truth.astype(int), pred.astype(int), average="binary", pos_label=1, zero_division=0
    )
    return DetectionScores(float(precision), float(recall), float(f1))
