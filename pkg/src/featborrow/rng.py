"""Deterministic 64-bit generator used for all seeded synthetic data.

SplitMix64 with the standard constants: golden-gamma increment
0x9E3779B97F4A7C15 and the Stafford mix13 finalizer multipliers
0xBF58476D1CE4E5B9 / 0x94D4BCD495399655.  The generator is tiny, has no
platform-dependent state, and makes every artifact byte-reproducible from
an integer seed.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_GAMMA = 0x9E3779B97F4A7C15
_MIX1 = 0xBF58476D1CE4E5B9
_MIX2 = 0x94D4BCD495399655


class SplitMix64:
    """Sequential SplitMix64 stream over Python integers."""

    def __init__(self, seed: int):
        self._state = seed & _MASK64

    def next_u64(self) -> int:
        self._state = (self._state + _GAMMA) & _MASK64
        z = self._state
        z = ((z ^ (z >> 30)) * _MIX1) & _MASK64
        z = ((z ^ (z >> 27)) * _MIX2) & _MASK64
        return z ^ (z >> 31)

    def next_float(self) -> float:
        """Uniform double in [0, 1) from the top 53 bits."""
        return (self.next_u64() >> 11) * 2.0**-53

    def uniform(self, lo: float, hi: float) -> float:
        return lo + (hi - lo) * self.next_float()

    def floats(self, n: int) -> np.ndarray:
        """Vector of n uniforms in [0, 1), drawn sequentially."""
        return np.array([self.next_float() for _ in range(n)], dtype=np.float64)


def substream_seed(seed: int, index: int) -> int:
    """Seed for the index-th child stream: the (index+1)-th output of a
    parent stream seeded with ``seed``.  Partitioned sampling uses this so
    results do not depend on how work is split across threads.
    """
    if index < 0:
        raise ValueError(f"substream index must be >= 0, got {index}")
    parent = SplitMix64(seed)
    out = 0
    for _ in range(index + 1):
        out = parent.next_u64()
    return out
