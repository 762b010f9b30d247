"""Central-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .rng import Rng
from .tensor import Tensor, no_grad


class GradCheckError(ArithmeticError):
    pass


def grad_check(
    f: Callable[..., Tensor],
    point: Sequence[Tensor],
    step: float = 1e-6,
    max_coords: int | None = None,
    seed: int = 0,
) -> float:
    """Max relative error between backward gradients and central differences.

    ``f`` maps the tensors in ``point`` to a scalar tensor.  The error for one
    coordinate is ``|analytic - numeric| / max(1, |analytic|, |numeric|)``.
    With ``max_coords`` set, larger tensors are probed at that many coordinates
    drawn from a seeded stream instead of exhaustively.
    """
    if step <= 0:
        raise ValueError(f"step must be positive, got {step}")
    for p in point:
        p.data = np.ascontiguousarray(p.data)
        p.requires_grad = True
        p.grad = None
    out = f(*point)
    if out.size != 1:
        raise ValueError(f"grad_check needs a scalar function, got shape {out.shape}")
    out.backward()
    analytic = [np.zeros_like(p.data) if p.grad is None else p.grad.copy() for p in point]

    rng = Rng(seed)
    worst = 0.0
    for which, (p, a) in enumerate(zip(point, analytic)):
        flat = p.data.reshape(-1)
        coords = np.arange(flat.size)
        if max_coords is not None and flat.size > max_coords:
            coords = np.sort(rng.split(which).permutation(flat.size)[:max_coords])
        for i in coords:
            orig = flat[i]
            with no_grad(), np.errstate(all="ignore"):
                flat[i] = orig + step
                hi = f(*point).item()
                flat[i] = orig - step
                lo = f(*point).item()
            flat[i] = orig
            if not (np.isfinite(hi) and np.isfinite(lo)):
                idx = tuple(int(j) for j in np.unravel_index(i, p.shape))
                raise GradCheckError(f"non-finite value at probe of tensor {which}, coordinate {idx}")
            numeric = (hi - lo) / (2 * step)
            ana = a.reshape(-1)[i]
            err = abs(ana - numeric) / max(1.0, abs(ana), abs(numeric))
            worst = max(worst, err)
    return worst
