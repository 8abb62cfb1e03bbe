"""
Common utility functions used across the pipeline
Seeding substreams and small number-theory helpers
"""
import math
import zlib
from typing import List, Tuple, Union

import numpy as np


def _stream_key(name: Union[str, int]) -> int:
    """Map a stream name or index to a stable non-negative integer"""
    if isinstance(name, (int, np.integer)):
        return int(name)
    return zlib.crc32(str(name).encode('utf-8'))


def seed_sequence(master_seed: int, *names: Union[str, int]) -> np.random.SeedSequence:
    """
    Derive a named seed sequence from the master seed

    Args:
        master_seed: Run-wide master seed
        *names: Stream path, e.g. ('sa', 77, 12)

    Returns:
        SeedSequence unique to (master_seed, names)
    """
    return np.random.SeedSequence(
        entropy=int(master_seed),
        spawn_key=tuple(_stream_key(n) for n in names),
    )


def substream(master_seed: int, *names: Union[str, int]) -> np.random.Generator:
    """
    Independent random generator for a named substream

    Example:
        rng = substream(seed, 'sa', 77, run_index)
    """
    return np.random.default_rng(seed_sequence(master_seed, *names))


def substream_seed(master_seed: int, *names: Union[str, int]) -> int:
    """32-bit integer seed for libraries that only accept plain ints"""
    return int(seed_sequence(master_seed, *names).generate_state(1)[0])


def is_prime(value: int) -> bool:
    """Deterministic trial division, adequate for desk-scale N"""
    if value < 2:
        return False
    if value % 2 == 0:
        return value == 2
    for d in range(3, math.isqrt(value) + 1, 2):
        if value % d == 0:
            return False
    return True


def factor_pairs(value: int) -> List[Tuple[int, int]]:
    """All (p, q) with 3 <= p <= q, both odd, p * q == value"""
    pairs = []
    for p in range(3, math.isqrt(value) + 1, 2):
        if value % p == 0:
            pairs.append((p, value // p))
    return pairs


def bit_index(value: int) -> int:
    """floor(log2(value)) for positive integers"""
    return value.bit_length() - 1
