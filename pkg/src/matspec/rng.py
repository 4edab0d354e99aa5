"""Deterministic RNG streams.

Every stochastic routine derives its generator from (seed, *path) through a
SeedSequence, so distinct consumers and distinct chunks get independent
streams and results are a pure function of (inputs, seed) regardless of
chunking or worker count.
"""

from __future__ import annotations

import numpy as np

__all__ = ["stream"]


def stream(seed: int, *path: int) -> np.random.Generator:
    return np.random.default_rng([int(seed) & 0xFFFFFFFFFFFFFFFF, *path])
