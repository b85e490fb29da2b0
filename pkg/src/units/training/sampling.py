from __future__ import annotations

from collections.abc import Sequence

import numpy as np

from units.errors import ConfigError


def sample_dataset(names: Sequence[str], rng: np.random.Generator) -> str:
    """Pick one dataset uniformly; every dataset is equally likely whatever its size."""

    if not names:
        raise ConfigError("no datasets to sample from")
    return names[int(rng.integers(len(names)))]
