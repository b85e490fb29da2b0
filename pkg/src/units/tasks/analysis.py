from __future__ import annotations

import numpy as np

from units.errors import ContractError
from units.model import UniTSModel


def prompt_similarity(model: UniTSModel) -> tuple[list[str], np.ndarray]:
    """Cosine similarity between the mean-pooled prompt tokens of every token set.

    Returns the token-set names in registry order and the symmetric similarity matrix.
    """

    names = model.sources()
    if len(names) < 2:
        raise ContractError(f"prompt similarity needs at least 2 token sets, found {len(names)}")
    means = []
    for name in names:
        prompt = model.token_set(name).prompt
        if prompt is None:
            raise ContractError("prompt similarity needs n_prompt_tokens >= 1")
        means.append(prompt.data.mean(axis=(0, 1)))
    vectors = np.stack(means)
    norms = np.linalg.norm(vectors, axis=1)
    norms = np.where(norms == 0.0, 1.0, norms)
    unit = vectors / norms[:, None]
    sim = unit @ unit.T
    sim = 0.5 * (sim + sim.T)
    np.fill_diagonal(sim, 1.0)
    return names, sim
