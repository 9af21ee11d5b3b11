"""Tensor arithmetic, reverse-mode autodiff and shared numeric primitives."""

from .functional import (
    cosine_similarity,
    cross_entropy,
    gumbel_softmax,
    layer_norm,
    linear,
    multi_head_attention,
    one_hot_argmax,
    scaled_dot_attention,
    softmax_lastdim,
)
from .gradcheck import GradCheckReport, grad_check, grad_check_tensors, rel_err
from .tensor import (
    NonFiniteError,
    Tensor,
    as_tensor,
    broadcast_to,
    concat,
    exp,
    gather_rows,
    log,
    log_softmax,
    matmul,
    maximum0,
    mean,
    no_grad,
    relu,
    softmax,
    sqrt,
    stack,
    straight_through,
    tsum,
)

__all__ = [
    "GradCheckReport",
    "NonFiniteError",
    "Tensor",
    "as_tensor",
    "broadcast_to",
    "concat",
    "cosine_similarity",
    "cross_entropy",
    "exp",
    "gather_rows",
    "grad_check",
    "grad_check_tensors",
    "gumbel_softmax",
    "layer_norm",
    "linear",
    "log",
    "log_softmax",
    "matmul",
    "maximum0",
    "mean",
    "multi_head_attention",
    "no_grad",
    "one_hot_argmax",
    "rel_err",
    "relu",
    "scaled_dot_attention",
    "softmax",
    "softmax_lastdim",
    "sqrt",
    "stack",
    "straight_through",
    "tsum",
]
