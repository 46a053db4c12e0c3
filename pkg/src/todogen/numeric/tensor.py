"""Dense float64 tensors with reverse-mode automatic differentiation.

Define-by-run: while a :class:`Tape` is active, every primitive op records a
pull-back closure; ``tape.backward(loss)`` replays them in reverse and
accumulates exact analytic gradients.  With no tape active the same ops run
in plain inference mode (nothing is recorded), which is how decoding and
evaluation execute.

Every public op validates shapes and raises :class:`NumericError` on
non-finite output, so NaN/Inf surfaces at the op that produced it.
"""

from __future__ import annotations

import numpy as np

from .kernels import backend as _k


class NumericError(Exception):
    """Shape mismatch, non-finite value, or misuse of the tape."""


def _as_f64(data) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    return np.ascontiguousarray(arr)


def _check_finite(op: str, arr: np.ndarray) -> None:
    if not np.all(np.isfinite(arr)):
        raise NumericError(f"{op}: non-finite value in output")


class Tensor:
    """A dense float64 array plus optional gradient buffer."""

    __slots__ = ("data", "grad", "requires_grad", "_producer")

    def __init__(self, data, requires_grad: bool = False):
        self.data = _as_f64(data)
        _check_finite("tensor", self.data)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._producer: Tape | None = None

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def size(self) -> int:
        return self.data.size

    def zero_grad(self) -> None:
        self.grad = None

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)


def parameter(data) -> Tensor:
    """A trainable tensor (requires_grad=True)."""
    return Tensor(data, requires_grad=True)


def constant(data) -> Tensor:
    """A non-trainable tensor (masks, labels, fixed inputs)."""
    return Tensor(data, requires_grad=False)


# --------------------------------------------------------------------------
# Tape
# --------------------------------------------------------------------------

_TAPE_STACK: list["Tape"] = []


class Tape:
    """Ordered record of primitive applications for one forward pass.

    Entries are appended in execution order, which is already a topological
    order of the graph.  ``backward`` consumes the tape: a second call is an
    error, and a fresh tape is built for every training step.
    """

    def __init__(self):
        self._entries: list[tuple[tuple[Tensor, ...], object]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _TAPE_STACK.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        if _TAPE_STACK and _TAPE_STACK[-1] is self:
            _TAPE_STACK.pop()

    def _record(self, outs: tuple[Tensor, ...], pull) -> None:
        self._entries.append((outs, pull))
        for out in outs:
            out._producer = self

    def backward(self, loss: Tensor) -> None:
        """Populate gradients of everything the scalar ``loss`` depends on."""
        if self._consumed:
            raise NumericError("backward: tape already consumed")
        if loss.data.size != 1:
            raise NumericError(f"backward: loss must be scalar, got shape {loss.shape}")
        if loss._producer is not self:
            raise NumericError("backward: loss was not produced on this tape")
        loss.grad = np.ones_like(loss.data)
        for outs, pull in reversed(self._entries):
            if any(out.grad is not None for out in outs):
                pull()
        self._entries.clear()
        self._consumed = True


def _active_tape() -> Tape | None:
    return _TAPE_STACK[-1] if _TAPE_STACK else None


def _make(op: str, data: np.ndarray, inputs: tuple[Tensor, ...], pull_factory) -> Tensor:
    """Build an op output; record the pull-back if a tape is live."""
    _check_finite(op, data)
    out = Tensor.__new__(Tensor)
    out.data = data
    out.grad = None
    out.requires_grad = any(t.requires_grad for t in inputs)
    out._producer = None
    tape = _active_tape()
    if tape is not None and out.requires_grad:
        tape._record((out,), pull_factory(out))
    return out


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` (inverse of numpy broadcasting)."""
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


# --------------------------------------------------------------------------
# Elementwise / linear algebra primitives
# --------------------------------------------------------------------------

def add(a: Tensor, b: Tensor) -> Tensor:
    data = a.data + b.data

    def pull_factory(out):
        def pull():
            g = out.grad
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g, b.shape))
        return pull

    return _make("add", data, (a, b), pull_factory)


def sub(a: Tensor, b: Tensor) -> Tensor:
    data = a.data - b.data

    def pull_factory(out):
        def pull():
            g = out.grad
            if a.requires_grad:
                a._accumulate(_unbroadcast(g, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(-g, b.shape))
        return pull

    return _make("sub", data, (a, b), pull_factory)


def mul(a: Tensor, b: Tensor) -> Tensor:
    data = a.data * b.data

    def pull_factory(out):
        def pull():
            g = out.grad
            if a.requires_grad:
                a._accumulate(_unbroadcast(g * b.data, a.shape))
            if b.requires_grad:
                b._accumulate(_unbroadcast(g * a.data, b.shape))
        return pull

    return _make("mul", data, (a, b), pull_factory)


def scale(a: Tensor, c: float) -> Tensor:
    c = float(c)
    data = a.data * c

    def pull_factory(out):
        def pull():
            if a.requires_grad:
                a._accumulate(out.grad * c)
        return pull

    return _make("scale", data, (a,), pull_factory)


def matmul(a: Tensor, b: Tensor) -> Tensor:
    """2-D @ 2-D or batched 3-D @ 3-D (matching batch dims)."""
    if a.data.ndim != b.data.ndim or a.data.ndim not in (2, 3):
        raise NumericError(
            f"matmul: unsupported ranks {a.data.ndim} @ {b.data.ndim}")
    if a.shape[-1] != b.shape[-2] or (a.data.ndim == 3 and a.shape[0] != b.shape[0]):
        raise NumericError(f"matmul: shape mismatch {a.shape} @ {b.shape}")
    data = np.matmul(a.data, b.data)

    def pull_factory(out):
        def pull():
            g = out.grad
            if a.requires_grad:
                a._accumulate(np.matmul(g, np.swapaxes(b.data, -1, -2)))
            if b.requires_grad:
                b._accumulate(np.matmul(np.swapaxes(a.data, -1, -2), g))
        return pull

    return _make("matmul", data, (a, b), pull_factory)


def tanh(a: Tensor) -> Tensor:
    data = np.tanh(a.data)

    def pull_factory(out):
        def pull():
            if a.requires_grad:
                a._accumulate(out.grad * (1.0 - out.data * out.data))
        return pull

    return _make("tanh", data, (a,), pull_factory)


def sigmoid(a: Tensor) -> Tensor:
    data = np.empty_like(a.data)
    pos = a.data >= 0
    data[pos] = 1.0 / (1.0 + np.exp(-a.data[pos]))
    ex = np.exp(a.data[~pos])
    data[~pos] = ex / (1.0 + ex)

    def pull_factory(out):
        def pull():
            if a.requires_grad:
                a._accumulate(out.grad * out.data * (1.0 - out.data))
        return pull

    return _make("sigmoid", data, (a,), pull_factory)


def log(a: Tensor) -> Tensor:
    """Natural log; defined for strictly positive inputs."""
    if np.any(a.data <= 0):
        raise NumericError("log: input must be strictly positive")
    data = np.log(a.data)

    def pull_factory(out):
        def pull():
            if a.requires_grad:
                a._accumulate(out.grad / a.data)
        return pull

    return _make("log", data, (a,), pull_factory)


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    """Softmax along ``axis``, max-subtracted for stability."""
    nd = a.data.ndim
    if not -nd <= axis < nd:
        raise NumericError(f"softmax: axis {axis} invalid for rank {nd}")
    ax = axis % nd
    if nd == 2 and ax == 1:
        data = _k.softmax_rows(a.data)
    else:
        m = a.data.max(axis=ax, keepdims=True)
        e = np.exp(a.data - m)
        data = e / e.sum(axis=ax, keepdims=True)

    def pull_factory(out):
        def pull():
            if not a.requires_grad:
                return
            g = out.grad
            if nd == 2 and ax == 1:
                a._accumulate(_k.softmax_rows_backward(g, out.data))
            else:
                dot = (g * out.data).sum(axis=ax, keepdims=True)
                a._accumulate((g - dot) * out.data)
        return pull

    return _make("softmax", data, (a,), pull_factory)


# --------------------------------------------------------------------------
# Shape primitives
# --------------------------------------------------------------------------

def reshape(a: Tensor, shape: tuple[int, ...]) -> Tensor:
    data = np.ascontiguousarray(a.data.reshape(shape))

    def pull_factory(out):
        def pull():
            if a.requires_grad:
                a._accumulate(out.grad.reshape(a.shape))
        return pull

    return _make("reshape", data, (a,), pull_factory)


def concat(tensors: list[Tensor], axis: int) -> Tensor:
    if not tensors:
        raise NumericError("concat: empty input list")
    data = np.ascontiguousarray(np.concatenate([t.data for t in tensors], axis=axis))
    sizes = [t.shape[axis] for t in tensors]

    def pull_factory(out):
        def pull():
            g = out.grad
            offset = 0
            for t, n in zip(tensors, sizes):
                if t.requires_grad:
                    sl = [slice(None)] * g.ndim
                    sl[axis] = slice(offset, offset + n)
                    t._accumulate(g[tuple(sl)])
                offset += n
        return pull

    return _make("concat", data, tuple(tensors), pull_factory)


def stack(tensors: list[Tensor], axis: int = 1) -> Tensor:
    """Stack same-shape tensors along a new axis."""
    if not tensors:
        raise NumericError("stack: empty input list")
    data = np.ascontiguousarray(np.stack([t.data for t in tensors], axis=axis))

    def pull_factory(out):
        def pull():
            g = out.grad
            for i, t in enumerate(tensors):
                if t.requires_grad:
                    t._accumulate(np.take(g, i, axis=axis))
        return pull

    return _make("stack", data, tuple(tensors), pull_factory)


def narrow(a: Tensor, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along ``axis``."""
    if start < 0 or length < 0 or start + length > a.shape[axis]:
        raise NumericError(f"narrow: [{start}, {start + length}) out of range "
                           f"for axis {axis} of {a.shape}")
    sl = [slice(None)] * a.data.ndim
    sl[axis] = slice(start, start + length)
    index = tuple(sl)
    data = np.ascontiguousarray(a.data[index])

    def pull_factory(out):
        def pull():
            if a.requires_grad:
                g = np.zeros_like(a.data)
                g[index] = out.grad
                a._accumulate(g)
        return pull

    return _make("narrow", data, (a,), pull_factory)


def sum(a: Tensor, axis: int | None = None, keepdims: bool = False) -> Tensor:
    data = a.data.sum(axis=axis, keepdims=keepdims)

    def pull_factory(out):
        def pull():
            if not a.requires_grad:
                return
            g = out.grad
            if axis is not None and not keepdims:
                g = np.expand_dims(g, axis)
            a._accumulate(np.broadcast_to(g, a.shape).copy())
        return pull

    return _make("sum", data, (a,), pull_factory)


def mean(a: Tensor) -> Tensor:
    """Mean over all elements (composition of sum and scale)."""
    return scale(sum(a), 1.0 / a.size)


# --------------------------------------------------------------------------
# Lookup / distribution primitives
# --------------------------------------------------------------------------

def embedding_lookup(table: Tensor, ids) -> Tensor:
    """Rows of ``table`` at integer ``ids``; output shape ids.shape + (E,)."""
    ids = np.ascontiguousarray(np.asarray(ids, dtype=np.int64))
    if table.data.ndim != 2:
        raise NumericError("embedding_lookup: table must be 2-D")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise NumericError("embedding_lookup: id out of range")
    data = table.data[ids]

    def pull_factory(out):
        def pull():
            if table.requires_grad:
                if table.grad is None:
                    table.grad = np.zeros_like(table.data)
                gout = out.grad.reshape(-1, table.shape[1])
                _k.embedding_grad(table.grad, ids.reshape(-1), np.ascontiguousarray(gout))
        return pull

    return _make("embedding_lookup", data, (table,), pull_factory)


def dropout(a: Tensor, p: float, rng: np.random.Generator, train: bool) -> Tensor:
    """Inverted dropout: scales kept units by 1/(1-p); identity in eval mode."""
    if not 0.0 <= p < 1.0:
        raise NumericError(f"dropout: p must be in [0, 1), got {p}")
    if not train or p == 0.0:
        return a
    mask = (rng.random(a.shape) >= p).astype(np.float64) / (1.0 - p)
    data = a.data * mask

    def pull_factory(out):
        def pull():
            if a.requires_grad:
                a._accumulate(out.grad * mask)
        return pull

    return _make("dropout", data, (a,), pull_factory)


def cross_entropy(a: Tensor, target_ids, from_logits: bool = True) -> Tensor:
    """Per-row negative log-likelihood of ``target_ids``; output shape (B,).

    With ``from_logits`` the log-softmax is fused (log-sum-exp stabilized);
    otherwise rows must already be probabilities and the target entries
    strictly positive.
    """
    targets = np.asarray(target_ids, dtype=np.int64)
    if a.data.ndim != 2 or targets.shape != (a.shape[0],):
        raise NumericError(f"cross_entropy: need (B, C) input and (B,) targets, "
                           f"got {a.shape} and {targets.shape}")
    if targets.size and (targets.min() < 0 or targets.max() >= a.shape[1]):
        raise NumericError("cross_entropy: target id out of range")
    rows = np.arange(a.shape[0])
    if from_logits:
        m = a.data.max(axis=1, keepdims=True)
        z = a.data - m
        ez = np.exp(z)
        denom = ez.sum(axis=1)
        soft = ez / denom[:, None]
        data = np.log(denom) - z[rows, targets]

        def pull_factory(out):
            def pull():
                if a.requires_grad:
                    g = soft * out.grad[:, None]
                    g[rows, targets] -= out.grad
                    a._accumulate(g)
            return pull
    else:
        p_t = a.data[rows, targets]
        if np.any(p_t <= 0):
            raise NumericError("cross_entropy: target probability must be positive")
        data = -np.log(p_t)

        def pull_factory(out):
            def pull():
                if a.requires_grad:
                    g = np.zeros_like(a.data)
                    g[rows, targets] = -out.grad / p_t
                    a._accumulate(g)
            return pull

    return _make("cross_entropy", data, (a,), pull_factory)


def bce_with_logits(z: Tensor, labels) -> Tensor:
    """Elementwise binary cross-entropy on logits, numerically stable."""
    y = _as_f64(labels)
    if y.shape != z.shape:
        raise NumericError(f"bce_with_logits: label shape {y.shape} != logit shape {z.shape}")
    x = z.data
    data = np.maximum(x, 0.0) - x * y + np.log1p(np.exp(-np.abs(x)))
    sig = np.empty_like(x)
    pos = x >= 0
    sig[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    sig[~pos] = ex / (1.0 + ex)

    def pull_factory(out):
        def pull():
            if z.requires_grad:
                z._accumulate(out.grad * (sig - y))
        return pull

    return _make("bce_with_logits", data, (z,), pull_factory)


def lstm_cell(pre: Tensor, c_prev: Tensor) -> tuple[Tensor, Tensor]:
    """Fused LSTM cell: gate pre-activations (B, 4H) + previous cell (B, H).

    Returns (h, c).  The gate layout of ``pre`` is [input|forget|cell|output].
    """
    B, H = c_prev.shape
    if pre.shape != (B, 4 * H):
        raise NumericError(f"lstm_cell: pre-activation {pre.shape} does not match "
                           f"cell state {c_prev.shape}")
    h_data, c_data, cache = _k.lstm_cell_forward(pre.data, c_prev.data)
    _check_finite("lstm_cell", h_data)
    requires = pre.requires_grad or c_prev.requires_grad
    h = Tensor.__new__(Tensor)
    h.data, h.grad, h.requires_grad, h._producer = h_data, None, requires, None
    c = Tensor.__new__(Tensor)
    c.data, c.grad, c.requires_grad, c._producer = c_data, None, requires, None
    tape = _active_tape()
    if tape is not None and requires:
        def pull():
            dh = h.grad if h.grad is not None else np.zeros_like(h.data)
            dc = c.grad if c.grad is not None else np.zeros_like(c.data)
            dpre, dc_prev = _k.lstm_cell_backward(dh, dc, cache, c_prev.data)
            if pre.requires_grad:
                pre._accumulate(dpre)
            if c_prev.requires_grad:
                c_prev._accumulate(dc_prev)
        tape._record((h, c), pull)
    return h, c


def scatter_add_rows(weights: Tensor, idx, n_cols: int) -> Tensor:
    """Aggregate per-position weights by target slot: out[b, idx[b,t]] += w[b,t].

    This is the copy-distribution primitive: attention mass grouped by the
    extended-vocabulary id of each source token.
    """
    idx = np.ascontiguousarray(np.asarray(idx, dtype=np.int64))
    if weights.data.ndim != 2 or idx.shape != weights.shape:
        raise NumericError(f"scatter_add_rows: weights {weights.shape} and idx "
                           f"{idx.shape} must be matching 2-D")
    if idx.size and (idx.min() < 0 or idx.max() >= n_cols):
        raise NumericError("scatter_add_rows: index out of range")
    data = _k.scatter_add_rows(weights.data, idx, n_cols)

    def pull_factory(out):
        def pull():
            if weights.requires_grad:
                weights._accumulate(_k.scatter_add_rows_backward(out.grad, idx))
        return pull

    return _make("scatter_add_rows", data, (weights,), pull_factory)


def gather_cols(a: Tensor, idx) -> Tensor:
    """out[b] = a[b, idx[b]]; output shape (B,)."""
    idx = np.asarray(idx, dtype=np.int64)
    if a.data.ndim != 2 or idx.shape != (a.shape[0],):
        raise NumericError(f"gather_cols: need (B, C) input and (B,) idx, "
                           f"got {a.shape} and {idx.shape}")
    if idx.size and (idx.min() < 0 or idx.max() >= a.shape[1]):
        raise NumericError("gather_cols: index out of range")
    rows = np.arange(a.shape[0])
    data = a.data[rows, idx]

    def pull_factory(out):
        def pull():
            if a.requires_grad:
                g = np.zeros_like(a.data)
                np.add.at(g, (rows, idx), out.grad)
                a._accumulate(g)
        return pull

    return _make("gather_cols", data, (a,), pull_factory)


def pad_cols(a: Tensor, n_total: int) -> Tensor:
    """Zero-pad a (B, C) tensor on the right to (B, n_total)."""
    B, C = a.shape
    if n_total < C:
        raise NumericError(f"pad_cols: target width {n_total} < current {C}")
    data = np.zeros((B, n_total), dtype=np.float64)
    data[:, :C] = a.data

    def pull_factory(out):
        def pull():
            if a.requires_grad:
                a._accumulate(np.ascontiguousarray(out.grad[:, :C]))
        return pull

    return _make("pad_cols", data, (a,), pull_factory)
