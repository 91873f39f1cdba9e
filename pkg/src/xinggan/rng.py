"""Deterministic splitmix64 random streams.

Every random draw in the package (weight init, skeleton noise, palettes,
batch sampling) goes through :class:`SplitMix64` so that a run is a pure
function of its master seed.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def mix64(x: int) -> int:
    """Scalar splitmix64 finalizer."""
    x &= _MASK
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK
    return x ^ (x >> 31)


def derive_seed(seed: int, *keys: int | str) -> int:
    """Hash a seed together with integer or string keys into a child seed."""
    h = mix64(seed)
    for key in keys:
        if isinstance(key, str):
            for b in key.encode("utf-8"):
                h = mix64(h ^ b)
            h = mix64(h ^ 0xFF)
        else:
            h = mix64(h ^ mix64(int(key) + 0x9E3779B97F4A7C15))
    return h


class SplitMix64:
    """Counter-based splitmix64 generator with vectorized draws."""

    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self.counter = 0

    def next_u64(self, n: int | None = None) -> np.ndarray | int:
        count = 1 if n is None else int(n)
        idx = np.arange(self.counter + 1, self.counter + 1 + count, dtype=np.uint64)
        self.counter += count
        with np.errstate(over="ignore"):
            out = _mix(np.uint64(self.seed) + idx * _GOLDEN)
        return int(out[0]) if n is None else out

    def random(self, size=None) -> np.ndarray | float:
        """Uniform floats in [0, 1) with 53-bit resolution."""
        n = 1 if size is None else int(np.prod(size))
        bits = self.next_u64(n)
        vals = (bits >> np.uint64(11)).astype(np.float64) * (1.0 / (1 << 53))
        if size is None:
            return float(vals[0])
        return vals.reshape(size)

    def uniform(self, low=0.0, high=1.0, size=None):
        u = self.random(size)
        return low + (high - low) * u

    def normal(self, size=None):
        """Standard normal draws via Box-Muller."""
        n = 1 if size is None else int(np.prod(size))
        m = (n + 1) // 2
        u1 = 1.0 - self.random(m)  # (0, 1]
        u2 = self.random(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n]
        if size is None:
            return float(z[0])
        return z.reshape(size)

    def integers(self, low: int, high: int, size=None):
        """Integers in [low, high)."""
        span = high - low
        if span <= 0:
            raise ValueError(f"empty integer range [{low}, {high})")
        n = 1 if size is None else int(np.prod(size))
        vals = low + (self.next_u64(n) % np.uint64(span)).astype(np.int64)
        if size is None:
            return int(vals[0])
        return vals.reshape(size)

    def permutation(self, n: int) -> np.ndarray:
        keys = self.next_u64(n)
        return np.argsort(keys, kind="stable")

    def spawn(self, *keys: int | str) -> "SplitMix64":
        return SplitMix64(derive_seed(self.seed, *keys))
