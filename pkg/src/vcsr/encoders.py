"""Question encoder and frame projection.

Stands in for pretrained text/vision backbones: a trainable embedding table, a
learned positional embedding and one transformer encoder layer produce the
global question vector (output at the [CLS] position) and the local token
features (every other position).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .numcore import Tensor
from .numcore.nn import Embedding, Linear, Module, TransformerStack, parameter

CLS_ID = 0
SEP_ID = 1
PAD_ID = 2
N_SPECIAL = 3


@dataclass(frozen=True)
class QuestionTokens:
    token_ids: tuple[int, ...]

    def __init__(self, token_ids: Sequence[int]):
        object.__setattr__(self, "token_ids", tuple(int(t) for t in token_ids))

    def validate(self, vocab_size: int, max_len: int) -> None:
        ids = self.token_ids
        if not ids or ids[0] != CLS_ID:
            raise ValueError("question tokens must start with the [CLS] id")
        if len(ids) > max_len:
            raise ValueError(f"question length {len(ids)} exceeds max {max_len}")
        if any(t < 0 or t >= vocab_size for t in ids):
            raise ValueError(f"unknown token id (vocab size {vocab_size})")

    def __len__(self) -> int:
        return len(self.token_ids)


@dataclass
class QuestionEncoding:
    q_g: Tensor           # [..., d]
    q_l: Tensor           # [..., n_tok, d]
    mask: np.ndarray      # [..., n_tok] bool, False at padding


@dataclass
class FrameFeatures:
    features: Tensor      # [N, d_in]
    video_id: str = ""


def with_candidate(question: Sequence[int], candidate: Sequence[int]) -> list[int]:
    """``[CLS] q... [SEP] candidate...``; a leading [CLS] on the candidate is dropped."""
    cand = list(candidate)
    if cand and cand[0] == CLS_ID:
        cand = cand[1:]
    return list(question) + [SEP_ID] + cand


def pad_batch(seqs: Sequence[Sequence[int]]) -> np.ndarray:
    n = max(len(s) for s in seqs)
    out = np.full((len(seqs), n), PAD_ID, dtype=np.int64)
    for i, s in enumerate(seqs):
        out[i, : len(s)] = s
    return out


class QuestionEncoder(Module):
    def __init__(self, vocab_size: int, d: int, max_len: int, heads: int,
                 rng: np.random.Generator, layers: int = 1):
        super().__init__()
        self.vocab_size = vocab_size
        self.max_len = max_len
        self.embed = Embedding(vocab_size, d, rng)
        self.pos = parameter(rng.normal(0.0, 0.1, (max_len, d)))
        self.encoder = TransformerStack(d, heads, layers, rng)

    def encode_ids(self, ids: np.ndarray) -> QuestionEncoding:
        """Encode a padded id matrix [B, n] (or a single row [n])."""
        ids = np.asarray(ids, dtype=np.int64)
        if ids.shape[-1] > self.max_len:
            raise ValueError(f"sequence length {ids.shape[-1]} exceeds max {self.max_len}")
        if np.any(ids[..., 0] != CLS_ID):
            raise ValueError("question tokens must start with the [CLS] id")
        key_mask = ids != PAD_ID
        x = self.embed(ids) + self.pos[: ids.shape[-1]]
        h = self.encoder(x, key_mask=key_mask)
        return QuestionEncoding(q_g=h[..., 0, :], q_l=h[..., 1:, :], mask=key_mask[..., 1:])

    def __call__(self, tokens: QuestionTokens) -> QuestionEncoding:
        tokens.validate(self.vocab_size, self.max_len)
        return self.encode_ids(np.array(tokens.token_ids))


def encode_question(tokens: QuestionTokens, encoder: QuestionEncoder) -> QuestionEncoding:
    return encoder(tokens)


def encode_question_with_candidate(tokens: QuestionTokens, candidate: Sequence[int],
                                   encoder: QuestionEncoder) -> QuestionEncoding:
    cand_ids = candidate.token_ids if isinstance(candidate, QuestionTokens) else candidate
    joined = with_candidate(tokens.token_ids, cand_ids)
    if len(joined) > encoder.max_len:
        raise ValueError(f"question + candidate length {len(joined)} exceeds max {encoder.max_len}")
    return encoder(QuestionTokens(joined))


class FrameProjector(Module):
    """Per-frame linear map from input feature width to model width."""

    def __init__(self, d_in: int, d: int, rng: np.random.Generator, identity: bool = False):
        super().__init__()
        self.d_in = d_in
        self.proj = Linear(d_in, d, rng)
        if identity:
            if d_in != d:
                raise ValueError("identity projection needs d_in == d")
            self.proj.weight.data[:] = np.eye(d)
            self.proj.bias.data[:] = 0.0

    def __call__(self, frames: Tensor) -> Tensor:
        if frames.shape[-1] != self.d_in:
            raise ValueError(f"frame width {frames.shape[-1]} != configured d_in {self.d_in}")
        return self.proj(frames)


def project_frames(raw: FrameFeatures, projector: FrameProjector) -> Tensor:
    return projector(raw.features)
