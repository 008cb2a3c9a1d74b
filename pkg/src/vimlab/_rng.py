"""Seed derivation. Every random routine takes an explicit seed and derives
independent streams through `SeedSequence`; there is no global RNG state."""

import numpy as np


def rng_from(seed, *key):
    """Generator seeded by a root seed plus an integer derivation key."""
    entropy = (int(seed),) + tuple(int(k) for k in key)
    return np.random.default_rng(np.random.SeedSequence(entropy))
