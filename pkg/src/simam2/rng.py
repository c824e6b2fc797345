"""Seeded random streams.

All randomness goes through :func:`stream`, which derives an independent
Philox (counter-based) generator from a 64-bit seed and a stream name.
Nothing in the package touches numpy's global RNG.
"""

from __future__ import annotations

import zlib

import numpy as np

__all__ = ["stream"]

_MASK64 = (1 << 64) - 1


def stream(seed: int, name: str = "default") -> np.random.Generator:
    """Return the generator for ``(seed, name)``; identical inputs give identical draws."""
    if not 0 <= int(seed) <= _MASK64:
        raise ValueError(f"seed must fit in 64 unsigned bits, got {seed}")
    key = zlib.crc32(name.encode("utf-8"))
    seq = np.random.SeedSequence(int(seed), spawn_key=(key,))
    return np.random.Generator(np.random.Philox(seq))
