"""Pure-numpy implementations of the hot inner-loop kernels.

This module mirrors the API of the compiled extension ``_kernels_c``.
Whichever backend is active is chosen once, at import time, by
:mod:`todogen.numeric.kernels`.  All arrays are C-contiguous float64
(indices int64); callers guarantee that.
"""

import numpy as np

BACKEND = "python"


def _sigmoid(x):
    # piecewise form avoids overflow in exp for large |x|
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def lstm_cell_forward(pre, c_prev):
    """Fused LSTM gate math.

    ``pre`` is the (B, 4H) pre-activation (x@Wx + h@Wh + b) laid out as
    [input | forget | cell | output] blocks; ``c_prev`` is (B, H).
    Returns (h, c, cache) where cache holds activations for backward.
    """
    H = c_prev.shape[1]
    i = _sigmoid(pre[:, 0 * H:1 * H])
    f = _sigmoid(pre[:, 1 * H:2 * H])
    g = np.tanh(pre[:, 2 * H:3 * H])
    o = _sigmoid(pre[:, 3 * H:4 * H])
    c = f * c_prev + i * g
    tc = np.tanh(c)
    h = o * tc
    return h, c, (i, f, g, o, tc)


def lstm_cell_backward(dh, dc, cache, c_prev):
    """Backward of :func:`lstm_cell_forward`.

    Returns (dpre, dc_prev) given upstream gradients dh, dc (either may be
    all-zero when that output is unused).
    """
    i, f, g, o, tc = cache
    do = dh * tc
    dc_total = dc + dh * o * (1.0 - tc * tc)
    di = dc_total * g
    df = dc_total * c_prev
    dg = dc_total * i
    dc_prev = dc_total * f
    dpre = np.concatenate(
        [
            di * i * (1.0 - i),
            df * f * (1.0 - f),
            dg * (1.0 - g * g),
            do * o * (1.0 - o),
        ],
        axis=1,
    )
    return np.ascontiguousarray(dpre), dc_prev


def softmax_rows(x):
    """Row softmax of a 2-D array, max-subtracted for stability."""
    m = x.max(axis=1, keepdims=True)
    e = np.exp(x - m)
    return e / e.sum(axis=1, keepdims=True)


def softmax_rows_backward(gout, s):
    """Backward of row softmax: (g - sum(g*s)) * s."""
    dot = (gout * s).sum(axis=1, keepdims=True)
    return (gout - dot) * s


def scatter_add_rows(weights, idx, n_cols):
    """out[b, idx[b, t]] += weights[b, t] for every (b, t); out is (B, n_cols)."""
    B, T = weights.shape
    out = np.zeros((B, n_cols), dtype=np.float64)
    rows = np.repeat(np.arange(B), T)
    np.add.at(out, (rows, idx.ravel()), weights.ravel())
    return out


def scatter_add_rows_backward(gout, idx):
    """Backward of scatter_add_rows: gather gout at the scattered slots."""
    B, T = idx.shape
    rows = np.repeat(np.arange(B), T)
    return gout[rows, idx.ravel()].reshape(B, T)


def embedding_grad(table_grad, ids, gout):
    """Accumulate row gradients into an embedding table gradient, in place."""
    np.add.at(table_grad, ids, gout)


def adagrad_update(param, grad, accum, lr):
    """One Adagrad step, in place: accum += g^2; p -= lr * g / sqrt(accum)."""
    accum += grad * grad
    param -= lr * grad / np.sqrt(accum)
