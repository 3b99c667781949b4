"""Keyed random streams.

Each unit of work draws from its own generator derived from the run seed and
a tuple of identifying keys, so results do not depend on scheduling order or
on how work is split between processes.
"""

import zlib

import numpy as np

_MASK = (1 << 64) - 1


def _key(k):
    if isinstance(k, str):
        return zlib.crc32(k.encode("utf-8"))
    return int(k) & _MASK


def rng_for(seed, *keys) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([_key(seed), *(_key(k) for k in keys)]))
