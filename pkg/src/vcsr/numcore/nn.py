"""Minimal module system: named parameters plus the layers the model needs."""

from __future__ import annotations

import math
from collections import OrderedDict
from typing import Iterator

import numpy as np

from . import functional as F
from .tensor import Tensor, normalize_lastdim


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=np.float64), requires_grad=True)


class Module:
    """Registers Tensor parameters and sub-modules assigned as attributes."""

    def __init__(self):
        object.__setattr__(self, "_params", OrderedDict())
        object.__setattr__(self, "_modules", OrderedDict())

    def __setattr__(self, name, value):
        if isinstance(value, Tensor) and value.requires_grad:
            self._params[name] = value
        elif isinstance(value, Module):
            self._modules[name] = value
        object.__setattr__(self, name, value)

    def add_module(self, name: str, module: "Module") -> None:
        setattr(self, name, module)

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
        for name, p in self._params.items():
            yield prefix + name, p
        for name, m in self._modules.items():
            yield from m.named_parameters(prefix + name + ".")

    def parameters(self) -> list[Tensor]:
        return [p for _, p in self.named_parameters()]

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, p.data.copy()) for n, p in self.named_parameters())

    def load_state_dict(self, state: dict) -> None:
        own = dict(self.named_parameters())
        missing = set(own) - set(state)
        extra = set(state) - set(own)
        if missing or extra:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(extra)}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ValueError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = arr.copy()


class ModuleList(Module):
    def __init__(self, modules):
        super().__init__()
        self._items = []
        for i, m in enumerate(modules):
            self.add_module(str(i), m)
            self._items.append(m)

    def __iter__(self):
        return iter(self._items)

    def __len__(self):
        return len(self._items)

    def __getitem__(self, i):
        return self._items[i]


class Linear(Module):
    def __init__(self, d_in: int, d_out: int, rng: np.random.Generator, bias: bool = True):
        super().__init__()
        bound = 1.0 / math.sqrt(d_in)
        self.weight = parameter(rng.uniform(-bound, bound, (d_in, d_out)))
        self.bias = parameter(rng.uniform(-bound, bound, d_out)) if bias else None

    def __call__(self, x: Tensor) -> Tensor:
        return F.linear(x, self.weight, self.bias)


class LayerNorm(Module):
    def __init__(self, d: int, eps: float = 1e-5):
        super().__init__()
        self.eps = eps
        self.gamma = parameter(np.ones(d))
        self.beta = parameter(np.zeros(d))

    def __call__(self, x: Tensor) -> Tensor:
        return normalize_lastdim(x, self.eps) * self.gamma + self.beta


class Embedding(Module):
    def __init__(self, n: int, d: int, rng: np.random.Generator, scale: float = 0.1):
        super().__init__()
        self.weight = parameter(rng.normal(0.0, scale, (n, d)))

    def __call__(self, ids) -> Tensor:
        ids = np.asarray(ids, dtype=np.int64)
        if ids.size and (ids.min() < 0 or ids.max() >= self.weight.shape[0]):
            raise IndexError(f"embedding id out of range [0, {self.weight.shape[0]})")
        return self.weight[ids]


class MultiHeadAttention(Module):
    def __init__(self, d: int, heads: int, rng: np.random.Generator):
        super().__init__()
        if d % heads:
            raise ValueError(f"width {d} not divisible by {heads} heads")
        self.heads = heads
        self.q = Linear(d, d, rng)
        self.k = Linear(d, d, rng)
        self.v = Linear(d, d, rng)
        self.o = Linear(d, d, rng)

    def __call__(self, x: Tensor, context: Tensor | None = None, key_mask=None) -> Tensor:
        ctx = x if context is None else context
        params = {
            "wq": self.q.weight, "bq": self.q.bias,
            "wk": self.k.weight, "bk": self.k.bias,
            "wv": self.v.weight, "bv": self.v.bias,
            "wo": self.o.weight, "bo": self.o.bias,
        }
        return F.multi_head_attention(x, ctx, params, self.heads, key_mask=key_mask)


class TransformerBlock(Module):
    """Pre-norm block: ``x + MHSA(LN(x))`` then ``x + FFN(LN(x))``."""

    def __init__(self, d: int, heads: int, rng: np.random.Generator, ffn_mult: int = 4):
        super().__init__()
        self.ln1 = LayerNorm(d)
        self.attn = MultiHeadAttention(d, heads, rng)
        self.ln2 = LayerNorm(d)
        self.ff1 = Linear(d, ffn_mult * d, rng)
        self.ff2 = Linear(ffn_mult * d, d, rng)

    def __call__(self, x: Tensor, key_mask=None) -> Tensor:
        x = x + self.attn(self.ln1(x), key_mask=key_mask)
        return x + self.ff2(F.relu(self.ff1(self.ln2(x))))

    def zero_residual_branches(self) -> None:
        for lin in (self.attn.o, self.ff2):
            lin.weight.data[:] = 0.0
            lin.bias.data[:] = 0.0


class TransformerStack(Module):
    def __init__(self, d: int, heads: int, layers: int, rng: np.random.Generator,
                 ffn_mult: int = 4, final_norm: bool = True):
        super().__init__()
        if layers < 1:
            raise ValueError("a transformer stack needs at least one layer")
        self.blocks = ModuleList([TransformerBlock(d, heads, rng, ffn_mult) for _ in range(layers)])
        self.norm = LayerNorm(d) if final_norm else None

    def __call__(self, x: Tensor, key_mask=None) -> Tensor:
        for block in self.blocks:
            x = block(x, key_mask=key_mask)
        return self.norm(x) if self.norm is not None else x
