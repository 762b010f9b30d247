"""Single-level orthonormal Haar transform over the trailing (time) axis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .tensor import ShapeError, Tensor, as_tensor, matmul

SQRT1_2 = 1.0 / np.sqrt(2.0)


@dataclass(frozen=True)
class HaarFilterPair:
    """Low/high-pass analysis matrices, each ``T x T/2``.

    Column ``j`` of ``low`` averages frames ``2j, 2j+1``; column ``j`` of
    ``high`` differences them.  Both carry the orthonormal ``1/sqrt(2)`` scale.
    """

    T: int
    low: np.ndarray
    high: np.ndarray


def build_haar(T: int) -> HaarFilterPair:
    if not isinstance(T, (int, np.integer)) or T < 2 or T % 2:
        raise ValueError(f"Haar filters need an even frame count T >= 2, got {T!r}")
    half = T // 2
    low = np.zeros((T, half))
    high = np.zeros((T, half))
    j = np.arange(half)
    low[2 * j, j] = SQRT1_2
    low[2 * j + 1, j] = SQRT1_2
    high[2 * j, j] = SQRT1_2
    high[2 * j + 1, j] = -SQRT1_2
    low.flags.writeable = False
    high.flags.writeable = False
    return HaarFilterPair(int(T), low, high)


def dwt(x, filters: HaarFilterPair) -> tuple[Tensor, Tensor]:
    """Split trajectories ``(..., T)`` into low and high bands ``(..., T/2)``."""
    x = as_tensor(x)
    if x.ndim < 1 or x.shape[-1] != filters.T:
        raise ShapeError(f"dwt: last extent of {x.shape} must equal filter length {filters.T}")
    return matmul_last(x, filters.low), matmul_last(x, filters.high)


def idwt(x_low, x_high, filters: HaarFilterPair) -> Tensor:
    x_low, x_high = as_tensor(x_low), as_tensor(x_high)
    half = filters.T // 2
    if x_low.shape != x_high.shape or x_low.shape[-1] != half:
        raise ShapeError(f"idwt: bands {x_low.shape} and {x_high.shape} must match with last extent {half}")
    return matmul_last(x_low, filters.low.T) + matmul_last(x_high, filters.high.T)


def matmul_last(x: Tensor, m: np.ndarray) -> Tensor:
    # matmul needs rank >= 2; lift 1-D rows
    if x.ndim == 1:
        return matmul(x.reshape(1, -1), m).reshape(m.shape[1])
    return matmul(x, m)


def band_energy(x: np.ndarray, filters: HaarFilterPair) -> tuple[float, float]:
    """Squared norms of the low and high bands of ``x``."""
    low, high = dwt(x, filters)
    return float((low.data**2).sum()), float((high.data**2).sum())
