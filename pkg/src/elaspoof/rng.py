"""Seeded random streams.

Each purpose draws from its own PCG64 stream derived from ``(seed, stream)``
so that, for example, changing the dropout draws never perturbs the shuffle
order.
"""

import enum

import numpy as np


class Stream(enum.IntEnum):
    INIT = 1
    DROPOUT = 2
    SHUFFLE = 3
    VALIDATION_SPLIT = 4
    DATASET_SPLIT = 5
    GRADCHECK = 6
    SYNTHETIC = 7


def make_rng(seed: int, stream: Stream) -> np.random.Generator:
    seed = int(seed) & 0xFFFF_FFFF_FFFF_FFFF
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, int(stream)])))
