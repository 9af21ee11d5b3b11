"""Question-guided refiner: overlapping segments, in-segment attention, question-guided pooling."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numcore import Tensor, matmul, softmax, stack
from .numcore.nn import Linear, Module, TransformerStack, parameter


@dataclass
class Segment:
    index: int
    frame_span: tuple[int, int]
    frames: Tensor  # [m, d]


@dataclass
class SegmentSet:
    refined: Tensor                 # S*: [..., T, d]
    per_segment_frames: Tensor      # s'_t: [..., T, m, d]
    alignment: np.ndarray           # [T, m] frame index of each slot
    attention: Tensor | None = None  # CMA weights [..., T, m]

    @property
    def n_segments(self) -> int:
        return self.alignment.shape[0]


def n_segments(n_frames: int, m: int) -> int:
    if m < 1:
        raise ValueError(f"segment length must be >= 1, got {m}")
    if n_frames < m:
        raise ValueError(f"need at least m={m} frames, got {n_frames}")
    return n_frames - m + 1


def alignment_map(n_frames: int, m: int) -> np.ndarray:
    t = n_segments(n_frames, m)
    return np.arange(t)[:, None] + np.arange(m)[None, :]


def build_segments(frames: Tensor, m: int) -> list[Segment]:
    """Stride-1 windows of ``m`` frames over a [N, d] frame matrix."""
    t = n_segments(frames.shape[0], m)
    return [Segment(i, (i, i + m), frames[i:i + m]) for i in range(t)]


def segment_tensor(frames: Tensor, m: int) -> Tensor:
    """Batched windowing: [..., N, d] -> [..., T, m, d]."""
    n = frames.shape[-2]
    t = n_segments(n, m)
    return stack([frames[..., j:j + t, :] for j in range(m)], axis=-2)


class InSegmentAttention(Module):
    """``MHSA^(L)(s_t + PE)`` with pre-norm blocks; PE added once before layer 1."""

    def __init__(self, d: int, m: int, heads: int, layers: int, rng: np.random.Generator,
                 ffn_mult: int = 4):
        super().__init__()
        self.pos = parameter(rng.normal(0.0, 0.1, (m, d)))
        self.stack = TransformerStack(d, heads, layers, rng, ffn_mult, final_norm=False)

    def __call__(self, segment_frames: Tensor) -> Tensor:
        return self.stack(segment_frames + self.pos)

    def zero_residual_branches(self) -> None:
        for block in self.stack.blocks:
            block.zero_residual_branches()


def isa_forward(segment: Segment, isa: InSegmentAttention) -> Tensor:
    return isa(segment.frames)


class CrossModalAttention(Module):
    """Single-head question-to-frames attention; values are the frames themselves."""

    def __init__(self, d: int, rng: np.random.Generator, d_k: int | None = None):
        super().__init__()
        d_k = d_k or d
        self.f_q = Linear(d, d_k, rng)
        self.f_s = Linear(d, d_k, rng)

    def __call__(self, post_isa: Tensor, q_g: Tensor) -> tuple[Tensor, Tensor]:
        if post_isa.shape[-1] != q_g.shape[-1]:
            raise ValueError("question and frame widths differ")
        query = self.f_q(q_g).reshape(*q_g.shape[:-1], 1, -1)     # [..., 1, d_k]
        keys = self.f_s(post_isa)                                   # [..., m, d_k]
        scores = matmul(query, keys.swapaxes(-1, -2)) * (1.0 / math.sqrt(keys.shape[-1]))
        weights = softmax(scores, axis=-1)                          # [..., 1, m]
        out = matmul(weights, post_isa)                             # [..., 1, d]
        # leading axes may broadcast (shared frames, per-candidate questions)
        return (out.reshape(*out.shape[:-2], out.shape[-1]),
                weights.reshape(*weights.shape[:-2], weights.shape[-1]))


def cma_refine(post_isa: Tensor, q_g: Tensor, cma: CrossModalAttention) -> Tensor:
    return cma(post_isa, q_g)[0]


class QuestionGuidedRefiner(Module):
    def __init__(self, d: int, m: int, heads: int, layers: int, rng: np.random.Generator,
                 ffn_mult: int = 4, cma_dk: int | None = None):
        super().__init__()
        self.m = m
        self.isa = InSegmentAttention(d, m, heads, layers, rng, ffn_mult)
        self.cma = CrossModalAttention(d, rng, cma_dk)

    def mix(self, frames: Tensor) -> Tensor:
        """Question-independent half: windowing + ISA, [..., N, d] -> [..., T, m, d]."""
        return self.isa(segment_tensor(frames, self.m))

    def refine(self, post_isa: Tensor, q_g: Tensor) -> SegmentSet:
        n_seg = post_isa.shape[-3]
        q = q_g.reshape(*q_g.shape[:-1], 1, q_g.shape[-1])           # broadcast over T
        refined, attn = self.cma(post_isa, q)
        return SegmentSet(refined, post_isa, alignment_map(n_seg + self.m - 1, self.m), attn)

    def __call__(self, frames: Tensor, q_g: Tensor) -> SegmentSet:
        return self.refine(self.mix(frames), q_g)


def mean_pool_segments(frames: Tensor, m: int) -> SegmentSet:
    """Refiner-free segments (the "w/o QGR" variant): mean of each window's frames."""
    seg = segment_tensor(frames, m)
    return SegmentSet(seg.mean(axis=-2), seg, alignment_map(frames.shape[-2], m))
