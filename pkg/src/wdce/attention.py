"""Decoupling attention and trajectory-wise attention blocks."""

from __future__ import annotations

import numpy as np

from . import tensor as tn
from .backbone import uniform_param, zeros_param
from .rng import Rng
from .tensor import ShapeError, Tensor

DA_KERNEL = 3


def init_decoupling(rng: Rng, channels: int, T: int, kernel: int = DA_KERNEL) -> dict[str, Tensor]:
    """Linear ``T -> T/2`` plus a ``C -> 2`` temporal convolution."""
    return {
        "linear_w": uniform_param(rng.split("linear_w"), (T, T // 2), T),
        "linear_b": zeros_param(T // 2),
        "conv_w": uniform_param(rng.split("conv_w"), (2, channels, kernel), channels * kernel),
        "conv_b": zeros_param(2),
    }


def init_trajectory(rng: Rng, channels: int, V: int, d_att: int = 8) -> dict[str, Tensor]:
    if d_att < 1:
        raise ValueError(f"d_att must be >= 1, got {d_att}")
    return {
        "mlp_a_w": uniform_param(rng.split("mlp_a_w"), (V, d_att), V),
        "mlp_a_b": zeros_param(d_att),
        "mlp_b_w": uniform_param(rng.split("mlp_b_w"), (channels, d_att), channels),
        "mlp_b_b": zeros_param(d_att),
    }


def band_to_grid(band: Tensor, C: int, V: int) -> Tensor:
    """``(N, C*V, T')`` trajectory rows back to ``(N, C, T', V)``."""
    n, _, t = band.shape
    return tn.transpose(tn.reshape(band, (n, C, V, t)), (0, 1, 3, 2))


def grid_to_band(x: Tensor) -> Tensor:
    """``(N, C, T, V)`` to trajectory rows ``(N, C*V, T)``, channel-major."""
    n, c, t, v = x.shape
    return tn.reshape(tn.transpose(x, (0, 1, 3, 2)), (n, c * v, t))


def decoupling_weights(x_embed: Tensor, p: dict[str, Tensor]) -> Tensor:
    """Temporal weights ``(N, 2, T/2)`` in (0, 1): row 0 low band, row 1 high band."""
    n, c, t, v = x_embed.shape
    if p["linear_w"].shape != (t, t // 2) or p["conv_w"].shape[1] != c:
        raise ShapeError(
            f"decoupling_attention: embed {x_embed.shape} vs linear {p['linear_w'].shape}, conv {p['conv_w'].shape}"
        )
    pooled = tn.mean(x_embed, axis=3)  # N C T
    z = tn.matmul(pooled, p["linear_w"]) + p["linear_b"]  # N C T/2
    k = p["conv_w"].shape[2]
    z = tn.conv1d(z, p["conv_w"], p["conv_b"], padding=k // 2)  # N 2 T/2
    return tn.sigmoid(z)


def decoupling_attention(x_embed, x_low, x_high, p: dict[str, Tensor]) -> tuple[Tensor, Tensor, Tensor]:
    """Recalibrate the two bands with input-dependent temporal weights.

    ``x_low``/``x_high`` may be trajectory rows ``(N, C*V, T/2)`` or already
    in grid layout ``(N, C', T/2, V)``; the channel-split control passes
    ``C' = C/2``.  Returns ``(salient, subtle, weights)``
    with the features in grid layout.
    """
    x_embed = tn.as_tensor(x_embed)
    n, c, t, v = x_embed.shape
    if t % 2:
        raise ShapeError(f"decoupling_attention: T must be even, got {t}")
    x_low, x_high = tn.as_tensor(x_low), tn.as_tensor(x_high)
    if x_low.ndim == 3:
        if x_low.shape != (n, c * v, t // 2) or x_high.shape != x_low.shape:
            raise ShapeError(f"decoupling_attention: bands {x_low.shape}, {x_high.shape} vs embed {x_embed.shape}")
        x_low, x_high = band_to_grid(x_low, c, v), band_to_grid(x_high, c, v)
    elif x_low.ndim != 4 or x_low.shape[0] != n or x_low.shape[2:] != (t // 2, v) or x_high.shape != x_low.shape:
        raise ShapeError(f"decoupling_attention: bands {x_low.shape}, {x_high.shape} vs embed {x_embed.shape}")
    w = decoupling_weights(x_embed, p)
    a = tn.reshape(w, (n, 2, t // 2, 1))
    salient = x_low * a[:, 0:1]
    subtle = x_high * a[:, 1:2]
    return salient, subtle, w


def trajectory_attention(x_subtle, p: dict[str, Tensor]) -> tuple[Tensor, Tensor]:
    """Reweight subtle features by a joint-wise attention map.

    Returns ``(enhanced, att)`` where ``att`` is ``(N, C, V)`` and sums to one
    over joints for every ``(n, c)``.
    """
    x = tn.as_tensor(x_subtle)
    n, c, t, v = x.shape
    if p["mlp_a_w"].shape[0] != v or p["mlp_b_w"].shape[0] != c:
        raise ShapeError(f"trajectory_attention: input {x.shape} vs mlp_a {p['mlp_a_w'].shape}, mlp_b {p['mlp_b_w'].shape}")
    if p["mlp_a_w"].shape[1] != p["mlp_b_w"].shape[1]:
        raise ShapeError(f"trajectory_attention: d_att mismatch {p['mlp_a_w'].shape} vs {p['mlp_b_w'].shape}")
    f = tn.mean(x, axis=2)  # N C V
    a = tn.matmul(f, p["mlp_a_w"]) + p["mlp_a_b"]  # N C d
    b = tn.matmul(tn.transpose(f, (0, 2, 1)), p["mlp_b_w"]) + p["mlp_b_b"]  # N V d
    scores = tn.matmul(a, tn.transpose(b, (0, 2, 1)))  # N C V
    att = tn.softmax(scores, axis=-1)
    enhanced = x * tn.reshape(att, (n, c, 1, v))
    return enhanced, att


def check_attention_map(att: np.ndarray, tol: float = 1e-10) -> None:
    sums = att.sum(axis=-1)
    if not np.all(np.abs(sums - 1.0) <= tol):
        raise AssertionError(f"attention rows deviate from 1 by {np.abs(sums - 1).max():.3e}")
    if not np.all((att > 0) & (att < 1)):
        raise AssertionError("attention entries outside (0, 1)")
