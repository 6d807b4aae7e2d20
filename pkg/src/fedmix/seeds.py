"""Deterministic RNG derivation.

Every stochastic step in the simulator draws from a generator built here,
so a run is a pure function of the integer seeds in its config.
"""

from __future__ import annotations

import numpy as np


def rng_from(seed: int, *key: int) -> np.random.Generator:
    """Child generator for (seed, *key).

    Seeds and key parts must be non-negative ints; the same tuple always
    yields the same stream.
    """
    parts = (int(seed),) + tuple(int(k) for k in key)
    if any(p < 0 for p in parts):
        raise ValueError(f"seed components must be non-negative, got {parts}")
    return np.random.default_rng(np.random.SeedSequence(parts))
