"""Deterministic random streams.

All randomness in the package flows from a single root seed through
counter-based Philox generators. Streams are split by hashing a tuple of
string/int tags into the second key word, so data generation, weight init
and per-epoch shuffling never share state and never depend on call order.
Philox output is identical across platforms and numpy BLAS settings.
"""
from __future__ import annotations

import numpy as np

_FNV_OFFSET = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_MASK64 = 0xFFFFFFFFFFFFFFFF


def tag_hash(*tags: object) -> int:
    """FNV-1a over the repr of each tag, folded into 64 bits."""
    h = _FNV_OFFSET
    for tag in tags:
        for byte in repr(tag).encode("utf-8"):
            h ^= byte
            h = (h * _FNV_PRIME) & _MASK64
        h ^= 0xFF  # separator so ("ab",) != ("a", "b")
        h = (h * _FNV_PRIME) & _MASK64
    return h


def stream(seed: int, *tags: object) -> np.random.Generator:
    """A Philox generator keyed by (seed, hash(tags)).

    Same (seed, tags) always yields the same sequence; distinct tags give
    statistically independent streams.
    """
    key = np.array([seed & _MASK64, tag_hash(*tags)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))
