"""Finite-difference gradient verification.

The oracle side of every gradient in this project: central differences per
coordinate against the analytic gradients produced by the tape.  Large
tensors can be subsampled (seeded) to bound runtime.
"""

from __future__ import annotations

from typing import Callable

import numpy as np

from .tensor import NumericError, Tape, Tensor


def finite_diff_check(loss_fn: Callable[[], Tensor],
                      params: dict[str, Tensor],
                      eps: float = 1e-5,
                      max_coords_per_tensor: int | None = None,
                      seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients.

    ``loss_fn`` must be deterministic (no live dropout, no unseeded rng): it
    is evaluated twice up front and rejected if the values differ.
    """
    base = float(loss_fn().data)
    again = float(loss_fn().data)
    if base != again:
        raise NumericError("finite_diff_check: loss_fn is not deterministic "
                           "(disable dropout / fix the rng)")

    for p in params.values():
        p.grad = None
    with Tape() as tape:
        loss = loss_fn()
        tape.backward(loss)

    rng = np.random.default_rng(seed)
    worst = 0.0
    for name, p in params.items():
        analytic = p.grad if p.grad is not None else np.zeros_like(p.data)
        flat = p.data.reshape(-1)
        n = flat.size
        if max_coords_per_tensor is not None and n > max_coords_per_tensor:
            coords = rng.choice(n, size=max_coords_per_tensor, replace=False)
        else:
            coords = np.arange(n)
        ana_flat = analytic.reshape(-1)
        for i in coords:
            orig = flat[i]
            flat[i] = orig + eps
            f_plus = float(loss_fn().data)
            flat[i] = orig - eps
            f_minus = float(loss_fn().data)
            flat[i] = orig
            numeric = (f_plus - f_minus) / (2.0 * eps)
            denom = max(abs(ana_flat[i]) + abs(numeric), 1e-8)
            rel = abs(ana_flat[i] - numeric) / denom
            if rel > worst:
                worst = rel
    for p in params.values():
        p.grad = None
    return worst
