"""Dense tensor math with reverse-mode autodiff, Adagrad, and checkpoints."""

from .checkpoint import CheckpointError, load_params, save_params
from .gradcheck import finite_diff_check
from .kernels import backend_name
from .optim import AdagradState, adagrad_step, clip_grad_norm
from .tensor import (
    NumericError,
    Tape,
    Tensor,
    add,
    bce_with_logits,
    concat,
    constant,
    cross_entropy,
    dropout,
    embedding_lookup,
    gather_cols,
    log,
    lstm_cell,
    matmul,
    mean,
    mul,
    narrow,
    pad_cols,
    parameter,
    reshape,
    scale,
    scatter_add_rows,
    sigmoid,
    softmax,
    stack,
    sub,
    sum,
    tanh,
)

__all__ = [
    "AdagradState", "CheckpointError", "NumericError", "Tape", "Tensor",
    "adagrad_step", "add", "backend_name", "bce_with_logits", "clip_grad_norm",
    "concat", "constant", "cross_entropy", "dropout", "embedding_lookup",
    "finite_diff_check", "gather_cols", "load_params", "log", "lstm_cell",
    "matmul", "mean", "mul", "narrow", "pad_cols", "parameter", "reshape",
    "save_params", "scale", "scatter_add_rows", "sigmoid", "softmax", "stack",
    "sub", "sum", "tanh",
]
