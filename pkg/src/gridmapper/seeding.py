"""Deterministic 64-bit seed derivation.

Batch runners, the floorplan generator and the CLI all derive child seeds
from a base seed and an index through the same mixing function, so a single
recorded seed reproduces an entire run.
"""
from __future__ import annotations

_MASK64 = (1 << 64) - 1


def mix64(value: int) -> int:
    """SplitMix64 finalizer: a bijective avalanche over 64-bit integers."""
    z = (value + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def derive_seed(base: int, index: int) -> int:
    """Child seed for item ``index``: base XOR index pushed through mix64."""
    return mix64((base & _MASK64) ^ (index & _MASK64))
