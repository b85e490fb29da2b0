from __future__ import annotations

import math

import numpy as np

from units.errors import ContractError, DataError

from .protocol import AnomalyThreshold

# absorbs representation error in (1 - ratio) * n before taking the ceiling
_RANK_TOLERANCE = 1e-9


def fit_anomaly_threshold(errors: np.ndarray, ratio: float) -> AnomalyThreshold:
    """Nearest-rank (1 - ratio) quantile of the pooled per-timestep errors.

    The threshold is element ceil((1 - ratio) * n) - 1 of the ascending sort; points are
    flagged when their error is strictly greater. The rank stops one short of the top, so
    however small the ratio, a strictly largest error is still flagged.
    """

    if not 0.0 < ratio < 1.0:
        raise ContractError(f"anomaly ratio must lie in (0, 1), got {ratio}")
    pooled = np.sort(np.asarray(errors, dtype=float).reshape(-1))
    if pooled.size == 0:
        raise DataError("cannot fit an anomaly threshold on an empty error sample")
    rank = math.ceil((1.0 - ratio) * pooled.size - _RANK_TOLERANCE)
    index = min(max(rank - 1, 0), max(pooled.size - 2, 0))
    return AnomalyThreshold(float(pooled[index]), ratio, int(pooled.size))
