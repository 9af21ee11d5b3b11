"""Differentiable building blocks composed from the primitive tensor ops."""

from __future__ import annotations

import math

import numpy as np

from .tensor import (
    Tensor,
    as_tensor,
    log_softmax,
    matmul,
    normalize_lastdim,
    relu,
    softmax,
    sqrt,
    straight_through,
    tsum,
)

__all__ = [
    "softmax_lastdim",
    "linear",
    "layer_norm",
    "gumbel_softmax",
    "cosine_similarity",
    "cross_entropy",
    "scaled_dot_attention",
    "multi_head_attention",
    "relu",
]


def softmax_lastdim(x: Tensor, mask=None) -> Tensor:
    return softmax(as_tensor(x), axis=-1, mask=mask)


def linear(x: Tensor, weight: Tensor, bias: Tensor | None = None) -> Tensor:
    """``x @ weight + bias`` with ``weight`` stored as [in, out]."""
    if x.shape[-1] != weight.shape[0]:
        raise ValueError(f"linear: input width {x.shape[-1]} != weight rows {weight.shape[0]}")
    out = matmul(x, weight)
    return out + bias if bias is not None else out


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    return normalize_lastdim(x, eps) * gamma + beta


def sample_gumbel(shape, rng: np.random.Generator) -> np.ndarray:
    # rng.random is [0, 1); keep u strictly inside (0, 1)
    u = rng.random(shape)
    u = np.clip(u, np.finfo(np.float64).tiny, 1.0 - np.finfo(np.float64).epsneg)
    return -np.log(-np.log(u))


def gumbel_softmax(logits: Tensor, temperature: float, hard: bool,
                   rng: np.random.Generator, mask=None) -> Tensor:
    """Gumbel-Softmax sample over the last axis.

    Soft mode returns ``softmax((logits + g) / temperature)``. Hard mode returns
    the one-hot argmax of that vector in the forward pass while gradients flow
    through the soft sample (straight-through). ``mask`` (bool) removes
    categories: they get probability exactly 0 and are never selected.
    """
    if not temperature > 0:
        raise ValueError(f"temperature must be positive, got {temperature}")
    logits = as_tensor(logits)
    noise = sample_gumbel(logits.shape, rng)
    soft = softmax((logits + noise) * (1.0 / temperature), axis=-1, mask=mask)
    if not hard:
        return soft
    return straight_through(soft, one_hot_argmax(soft.data))


def one_hot_argmax(p: np.ndarray) -> np.ndarray:
    idx = p.argmax(axis=-1)
    out = np.zeros_like(p)
    np.put_along_axis(out, idx[..., None], 1.0, axis=-1)
    return out


def cosine_similarity(u: Tensor, v: Tensor, axis: int = -1) -> Tensor:
    u, v = as_tensor(u), as_tensor(v)
    nu2 = tsum(u * u, axis)
    nv2 = tsum(v * v, axis)
    if np.any(nu2.data == 0) or np.any(nv2.data == 0):
        raise ValueError("cosine similarity of a zero-norm vector")
    return tsum(u * v, axis) / sqrt(nu2 * nv2)


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Mean of ``-log softmax(logits)[target]`` over any leading batch axes."""
    logits = as_tensor(logits)
    n = logits.shape[-1]
    target = np.asarray(target, dtype=np.int64)
    if target.shape != logits.shape[:-1]:
        raise ValueError(f"target shape {target.shape} does not match logits {logits.shape}")
    if np.any(target < 0) or np.any(target >= n):
        raise IndexError(f"target index out of range for {n} classes")
    logp = log_softmax(logits, axis=-1)
    picked = logp[(*np.indices(target.shape, sparse=True), target)] if target.ndim else logp[int(target)]
    return -picked.mean()


def scaled_dot_attention(q: Tensor, k: Tensor, v: Tensor, key_mask=None,
                         return_weights: bool = False):
    """``softmax(q k^T / sqrt(d_k)) v`` over the last two axes."""
    scores = matmul(q, k.swapaxes(-1, -2)) * (1.0 / math.sqrt(q.shape[-1]))
    weights = softmax(scores, axis=-1, mask=key_mask)
    out = matmul(weights, v)
    return (out, weights) if return_weights else out


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, n, d = x.shape
    return x.reshape(*lead, n, heads, d // heads).swapaxes(-2, -3)


def _merge_heads(x: Tensor) -> Tensor:
    *lead, h, n, dh = x.shape
    return x.swapaxes(-2, -3).reshape(*lead, n, h * dh)


def multi_head_attention(q_in: Tensor, kv_in: Tensor, params: dict, heads: int,
                         key_mask=None) -> Tensor:
    """Multi-head attention with input/output projections.

    ``params`` holds ``wq, bq, wk, bk, wv, bv, wo, bo``. ``key_mask`` is a bool
    array of shape [..., n_keys]; False entries are excluded from every query.
    """
    d = q_in.shape[-1]
    if d % heads:
        raise ValueError(f"width {d} not divisible by {heads} heads")
    q = _split_heads(linear(q_in, params["wq"], params["bq"]), heads)
    k = _split_heads(linear(kv_in, params["wk"], params["bk"]), heads)
    v = _split_heads(linear(kv_in, params["wv"], params["bv"]), heads)
    mask = None
    if key_mask is not None:
        # [..., n_keys] -> [..., 1 (heads), 1 (queries), n_keys]
        mask = np.asarray(key_mask, dtype=bool)[..., None, None, :]
    out = scaled_dot_attention(q, k, v, key_mask=mask)
    return linear(_merge_heads(out), params["wo"], params["bo"])
