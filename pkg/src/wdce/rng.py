"""Counter-based splitmix64 generator.

Value ``i`` of a stream is ``mix(seed + (i + 1) * GAMMA)``, so draws depend only
on the seed and the position in the stream, never on platform RNG state.
``split`` derives an independent child stream from a key path, which lets each
sample or parameter own a stream keyed by its identity.
"""

from __future__ import annotations

import numpy as np

_MASK = (1 << 64) - 1
_GAMMA = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def _mix(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _fnv1a(text: str) -> int:
    h = 0xCBF29CE484222325
    for byte in text.encode("utf-8"):
        h = ((h ^ byte) * 0x100000001B3) & _MASK
    return h


class Rng:
    def __init__(self, seed: int):
        self.seed = int(seed) & _MASK
        self.counter = 0

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed:#x}, counter={self.counter})"

    def bits(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter + 1, self.counter + n + 1, dtype=np.uint64)
        self.counter += n
        return _mix(np.uint64(self.seed) + idx * _GAMMA)

    def split(self, *keys) -> "Rng":
        """Child generator keyed by ``keys`` (ints or strings)."""
        h = np.array([self.seed], dtype=np.uint64)
        for key in keys:
            k = _fnv1a(key) if isinstance(key, str) else int(key) & _MASK
            h = _mix(h ^ _mix(np.array([k], dtype=np.uint64) + _GAMMA))
        return Rng(int(h[0]))

    def uniform(self, shape=(), low: float = 0.0, high: float = 1.0) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        u = (self.bits(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return (low + (high - low) * u).reshape(shape)

    def normal(self, shape=(), mean: float = 0.0, std: float = 1.0) -> np.ndarray:
        shape = (shape,) if isinstance(shape, int) else tuple(shape)
        n = int(np.prod(shape, dtype=np.int64))
        m = (n + 1) // 2
        u1 = 1.0 - self.uniform(m)  # (0, 1]
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        z = np.concatenate([r * np.cos(2 * np.pi * u2), r * np.sin(2 * np.pi * u2)])[:n]
        return (mean + std * z).reshape(shape)

    def permutation(self, n: int) -> np.ndarray:
        return np.argsort(self.uniform(n), kind="stable")
