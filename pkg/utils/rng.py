"""
Random number generation utilities with seed support

Every stochastic step draws from its own PCG64 stream derived from
(seed, purpose keys), so runs are reproducible and streams never collide.
"""
import zlib
from typing import Union

import numpy as np

Key = Union[int, str]


def _key_to_int(key: Key) -> int:
    if isinstance(key, (int, np.integer)):
        return int(key)
    return zlib.crc32(str(key).encode("utf-8"))


def seed_sequence(seed: int, *keys: Key) -> np.random.SeedSequence:
    """SeedSequence for a purpose-keyed stream"""
    return np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(_key_to_int(k) for k in keys))


def make_rng(seed: int, *keys: Key) -> np.random.Generator:
    """Independent generator for (seed, *keys)"""
    return np.random.Generator(np.random.PCG64(seed_sequence(seed, *keys)))


def derive_seed(seed: int, *keys: Key) -> int:
    """Derive a child integer seed, e.g. for a sub-component that stores its own seed"""
    return int(seed_sequence(seed, *keys).generate_state(1, dtype=np.uint32)[0])
