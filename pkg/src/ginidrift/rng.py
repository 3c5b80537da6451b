"""Seed handling.

Every random draw in the package goes through a numpy ``Generator`` backed
by PCG64. Independent streams (one per bootstrap replicate, one per period)
are keyed by passing ``(seed, index)`` through :func:`mix64`, the SplitMix64
finalizer, so a stream depends only on its key and never on scheduling.
"""
import numpy as np

MASK64 = (1 << 64) - 1


def splitmix64(x: int) -> int:
    x = (x + 0x9E3779B97F4A7C15) & MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & MASK64
    return x ^ (x >> 31)


def mix64(seed: int, index: int) -> int:
    """Derive a 64-bit stream key from a base seed and a stream index."""
    return splitmix64(splitmix64(int(seed) & MASK64) ^ (int(index) & MASK64))


def generator(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & MASK64))


def stream(seed: int, index: int) -> np.random.Generator:
    return generator(mix64(seed, index))
