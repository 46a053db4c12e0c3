"""Adagrad with accumulator initialization, plus global gradient-norm clipping."""

from __future__ import annotations

import math

import numpy as np

from .kernels import backend as _k
from .tensor import NumericError, Tensor


class AdagradState:
    """Per-parameter squared-gradient accumulators.

    Defaults follow the training recipe used throughout this project:
    learning rate 0.15, accumulators initialized to 0.1 (so the very first
    update is already damped and no epsilon guard is needed).
    """

    def __init__(self, params: dict[str, Tensor],
                 learning_rate: float = 0.15,
                 accumulator_init: float = 0.1):
        if learning_rate <= 0:
            raise NumericError("AdagradState: learning rate must be positive")
        self.learning_rate = learning_rate
        self.accumulator_init = accumulator_init
        self.accumulators = {
            name: np.full_like(p.data, accumulator_init) for name, p in params.items()
        }


def clip_grad_norm(params: dict[str, Tensor], max_norm: float = 2.0) -> float:
    """Scale all gradients so their global L2 norm is at most ``max_norm``.

    Returns the applied factor (1.0 when no clipping was needed).  Missing
    gradients count as zero.
    """
    total = 0.0
    for p in params.values():
        if p.grad is not None:
            total += float(np.dot(p.grad.ravel(), p.grad.ravel()))
    norm = math.sqrt(total)
    if norm <= max_norm or norm == 0.0:
        return 1.0
    factor = max_norm / norm
    for p in params.values():
        if p.grad is not None:
            p.grad *= factor
    return factor


def adagrad_step(params: dict[str, Tensor], state: AdagradState) -> None:
    """Apply one Adagrad update to every parameter and zero the gradients."""
    for name, p in params.items():
        acc = state.accumulators.get(name)
        if acc is None or acc.shape != p.data.shape:
            raise NumericError(f"adagrad_step: state/parameter mismatch for '{name}'")
        if p.grad is not None:
            _k.adagrad_update(p.data.reshape(-1), p.grad.reshape(-1),
                              acc.reshape(-1), state.learning_rate)
            p.grad = None
