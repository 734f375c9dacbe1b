"""Deterministic random number generation.

Everything stochastic in this package (synthetic score generation, fuzzy
clustering initialization) draws from the counter-mode SplitMix64 generator
below. The generator is frozen by this repository: the same seed always
yields the same bit stream, on every platform, independent of numpy version
or thread count. Uniform doubles are derived from the top 53 bits of each
64-bit word; normal deviates use the Box-Muller transform on uniform pairs.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_U64_MASK = 0xFFFFFFFFFFFFFFFF


def _mix(z: np.ndarray) -> np.ndarray:
    """SplitMix64 finalizer applied elementwise to a uint64 array."""
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


def raw_words(seed: int, start: int, count: int) -> np.ndarray:
    """uint64 words ``start .. start+count-1`` of the stream for ``seed``."""
    idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
    base = np.uint64((seed * 0x9E3779B97F4A7C15 + 0x5851F42D4C957F2D) & _U64_MASK)
    return _mix(base + idx * _GOLDEN)


def uniforms(seed: int, count: int, start: int = 0) -> np.ndarray:
    """``count`` doubles uniform in [0, 1), deterministic in (seed, start)."""
    words = raw_words(seed, start, count)
    return (words >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)


def normals(seed: int, count: int, start: int = 0) -> np.ndarray:
    """``count`` standard-normal doubles via Box-Muller.

    Consumes exactly ``2 * ceil(count / 2)`` words of the underlying stream,
    so disjoint (seed, start) windows never overlap.
    """
    pairs = (count + 1) // 2
    u = uniforms(seed, 2 * pairs, start=start)
    u1 = u[:pairs]
    u2 = u[pairs:]
    # u1 == 0 would make log blow up; the smallest representable draw is fine.
    u1 = np.maximum(u1, 2.0 ** -53)
    r = np.sqrt(-2.0 * np.log(u1))
    theta = (2.0 * np.pi) * u2
    out = np.empty(2 * pairs, dtype=np.float64)
    out[0::2] = r * np.cos(theta)
    out[1::2] = r * np.sin(theta)
    return out[:count]


class Stream:
    """Stateful cursor over one seed's stream; hands out consecutive blocks."""

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._pos = 0

    def uniforms(self, count: int) -> np.ndarray:
        out = uniforms(self.seed, count, start=self._pos)
        self._pos += count
        return out

    def normals(self, count: int) -> np.ndarray:
        pairs = (count + 1) // 2
        out = normals(self.seed, count, start=self._pos)
        self._pos += 2 * pairs
        return out
