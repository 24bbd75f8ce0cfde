"""Seed splitting and random streams.

Every random draw in the package comes from a :class:`numpy.random.Generator`
built from a 64-bit key.  Keys are derived from the user seed with a
SplitMix64 finaliser so that replica ``r`` always sees the same stream no
matter how replicas are scheduled across workers.

Constants (fixed, documented for reproducibility of the splitting)::

    GOLDEN = 0x9E3779B97F4A7C15
    MIX1   = 0xBF58476D1CE4E5B9
    MIX2   = 0x94D049BB133111EB

    splitmix64(x):
        x = x + GOLDEN                 (mod 2**64)
        x = (x ^ (x >> 30)) * MIX1     (mod 2**64)
        x = (x ^ (x >> 27)) * MIX2     (mod 2**64)
        return x ^ (x >> 31)

    split(seed, replica, tag) =
        splitmix64(splitmix64(splitmix64(seed) ^ replica) ^ tag)
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
GOLDEN = 0x9E3779B97F4A7C15
MIX1 = 0xBF58476D1CE4E5B9
MIX2 = 0x94D049BB133111EB

# stream tags; values are part of the reproducibility contract
STREAM_TAGS = {
    "particles": 1,
    "matrix": 2,
    "law": 3,
}


def splitmix64(x: int) -> int:
    x = (x + GOLDEN) & MASK64
    x = ((x ^ (x >> 30)) * MIX1) & MASK64
    x = ((x ^ (x >> 27)) * MIX2) & MASK64
    return x ^ (x >> 31)


def split_seed(seed: int, replica: int = 0, tag: int | str = 0) -> int:
    """Derive the 64-bit key for ``(seed, replica, tag)``."""
    if isinstance(tag, str):
        tag = STREAM_TAGS[tag]
    h = splitmix64(int(seed) & MASK64)
    h = splitmix64(h ^ (int(replica) & MASK64))
    return splitmix64(h ^ (int(tag) & MASK64))


def make_stream(seed: int, replica: int = 0, tag: int | str = 0) -> np.random.Generator:
    """Independent generator for one replica and purpose."""
    return np.random.Generator(np.random.PCG64(split_seed(seed, replica, tag)))
