"""Deterministic random-stream derivation for parallel shot generation.

Every random draw in the simulator comes from a generator keyed by a
tuple (master seed, record index, basis, shot index, channel index), so
shots can be produced in any order, on any number of workers, and still
reproduce bit-identically.
"""

from __future__ import annotations

import numpy as np

BASIS_CODES = {"x": 0, "y": 1}


def shot_key(master_seed: int, record_index: int, basis: str, shot_index: int) -> tuple:
    return (int(master_seed), int(record_index), BASIS_CODES[basis], int(shot_index))


def generator_for(key: tuple) -> np.random.Generator:
    """Fresh generator for an integer key tuple."""
    return np.random.default_rng(np.random.SeedSequence(key))


def channel_generator(key: tuple, channel_index: int) -> np.random.Generator:
    """Generator for one noise channel inside one shot.

    Channel draws are keyed by index, so a channel realizes the same
    values whether it is sampled alone or inside a composite.
    """
    return generator_for((*key, int(channel_index)))
