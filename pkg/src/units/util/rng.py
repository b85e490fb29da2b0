from __future__ import annotations

import zlib

import numpy as np


def make_rng(seed: int, *stream: int | str) -> np.random.Generator:
    """Philox generator keyed by a seed plus an optional stream path.

    Philox is counter-based and its output is fixed by NumPy across platforms, so every
    draw made through here reproduces bit-for-bit anywhere. String stream components are
    mapped through CRC-32, never through `hash()`.
    """

    words = [int(seed) & 0xFFFFFFFF]
    for part in stream:
        words.append(zlib.crc32(part.encode("utf-8")) if isinstance(part, str) else int(part))
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(words)))
