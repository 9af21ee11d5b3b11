"""Video question reasoner: multi-modal transformer, contrastive loss, answer heads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .numcore import Tensor, broadcast_to, concat, log_softmax, matmul, stack, tsum
from .numcore.nn import Embedding, Linear, Module, TransformerStack, parameter

POS_SEGMENT, POS_FRAME, NEG_SEGMENT, NEG_FRAME, QUESTION = range(5)
N_SOURCES = 5


@dataclass
class SceneSet:
    """Scene tokens plus a per-token source type (array broadcastable to [..., n])."""

    tokens: Tensor
    types: np.ndarray

    @property
    def n(self) -> int:
        return self.tokens.shape[-2]


def positive_scenes(S_p: Tensor, F_p: Tensor) -> SceneSet:
    k = S_p.shape[-2]
    return SceneSet(concat([S_p, F_p], axis=-2), np.array([POS_SEGMENT] * k + [POS_FRAME] * k))


def negative_scenes(S_n: Tensor, F_n: Tensor) -> SceneSet:
    k = S_n.shape[-2]
    return SceneSet(concat([S_n, F_n], axis=-2), np.array([NEG_SEGMENT] * k + [NEG_FRAME] * k))


def join_scenes(a: SceneSet, b: SceneSet) -> SceneSet:
    lead = a.tokens.shape[:-2]
    ta = np.broadcast_to(a.types, (*lead, a.n))
    tb = np.broadcast_to(b.types, (*lead, b.n))
    return SceneSet(concat([a.tokens, b.tokens], axis=-2), np.concatenate([ta, tb], axis=-1))


@dataclass
class AnswerEmbeddings:
    a_p: Tensor
    a_n: Tensor | None
    a_g: Tensor | None
    negatives: Tensor | None  # [..., N_neg, d]; None when N_neg == 0

    @property
    def n_negatives(self) -> int:
        return 0 if self.negatives is None else self.negatives.shape[-2]


class MultiModalTransformer(Module):
    """``[ME(scenes); ME(q_l)] + PE`` through a transformer; mean over scene outputs."""

    def __init__(self, d: int, heads: int, layers: int, max_tokens: int,
                 rng: np.random.Generator, ffn_mult: int = 4, readout: str = "mean"):
        super().__init__()
        if readout not in ("mean", "cls"):
            raise ValueError(f"unknown readout {readout!r}")
        self.readout = readout
        self.max_tokens = max_tokens
        self.modality = Embedding(N_SOURCES, d, rng)
        self.pos = parameter(rng.normal(0.0, 0.1, (max_tokens, d)))
        if readout == "cls":
            self.cls = parameter(rng.normal(0.0, 0.1, d))
        self.transformer = TransformerStack(d, heads, layers, rng, ffn_mult)

    def __call__(self, scenes: SceneSet, q_l: Tensor, q_mask=None) -> Tensor:
        n_s = scenes.n
        if n_s < 1:
            raise ValueError("empty scene set")
        scene_tok = scenes.tokens + self.modality(scenes.types)
        q_tok = q_l + self.modality.weight[QUESTION]
        lead = np.broadcast_shapes(scene_tok.shape[:-2], q_tok.shape[:-2])
        d = scene_tok.shape[-1]
        if scene_tok.shape[:-2] != lead:
            scene_tok = broadcast_to(scene_tok, (*lead, n_s, d))
        if q_tok.shape[:-2] != lead:
            q_tok = broadcast_to(q_tok, (*lead, q_tok.shape[-2], d))
        parts = [scene_tok, q_tok]
        if self.readout == "cls":
            parts.insert(0, broadcast_to(self.cls, (*lead, 1, d)))
        x = concat(parts, axis=-2)
        n = x.shape[-2]
        if n > self.max_tokens:
            raise ValueError(f"{n} tokens exceed the positional table ({self.max_tokens})")
        x = x + self.pos[:n]
        key_mask = None
        if q_mask is not None:
            q_mask = np.broadcast_to(q_mask, (*lead, q_tok.shape[-2]))
            head = np.ones((*lead, n - q_tok.shape[-2]), dtype=bool)
            key_mask = np.concatenate([head, q_mask], axis=-1)
        h = self.transformer(x, key_mask=key_mask)
        if self.readout == "cls":
            return h[..., 0, :]
        return h[..., :n_s, :].mean(axis=-2)


def mmt_forward(scene_tokens: Tensor, types, q_l: Tensor, mmt: MultiModalTransformer,
                q_mask=None) -> Tensor:
    return mmt(SceneSet(scene_tokens, np.asarray(types)), q_l, q_mask)


def sample_subsets(n_items: int, pool_size: int, subset: int, count: int,
                   rng: np.random.Generator) -> np.ndarray:
    """``count`` index subsets per item, each drawn without replacement: [n_items, count, subset]."""
    if subset > pool_size:
        raise ValueError(f"subset of {subset} from {pool_size} scenes")
    keys = rng.random((n_items, count, pool_size))
    return np.argsort(keys, axis=-1)[..., :subset]


def answer_embeddings(C_p: SceneSet, C_n: SceneSet | None, q_l: Tensor, n_negatives: int,
                      rng: np.random.Generator, mmt: MultiModalTransformer, q_mask=None,
                      subset_size: int | None = None) -> AnswerEmbeddings:
    """a_p, a_n, a_g and the anchor-side negatives.

    The first negative is ``a_n`` (all of C_n); the remaining ``n_negatives - 1``
    come from random size-``subset_size`` subsets of C_n's scene tokens.
    """
    a_p = mmt(C_p, q_l, q_mask)
    if C_n is None:
        if n_negatives > 0:
            raise ValueError("cannot sample negatives from an empty negative scene set")
        return AnswerEmbeddings(a_p, None, None, None)
    a_n = mmt(C_n, q_l, q_mask)
    a_g = mmt(join_scenes(C_p, C_n), q_l, q_mask)
    if n_negatives <= 0:
        return AnswerEmbeddings(a_p, a_n, a_g, None)

    extra = n_negatives - 1
    if extra:
        size = subset_size or max(1, C_n.n // 2)
        lead = C_n.tokens.shape[:-2]
        n_items = int(np.prod(lead)) if lead else 1
        idx = sample_subsets(n_items, C_n.n, size, extra, rng).reshape(*lead, extra, size)
        onehot = np.zeros((*lead, extra, size, C_n.n))
        np.put_along_axis(onehot, idx[..., None], 1.0, axis=-1)
        tok = C_n.tokens.reshape(*lead, 1, C_n.n, C_n.tokens.shape[-1])
        sub_tokens = matmul(Tensor(onehot), tok)                      # [..., extra, size, d]
        types = np.broadcast_to(C_n.types, (*lead, C_n.n))
        sub_types = np.take_along_axis(types[..., None, :], idx, axis=-1)
        q = q_l.reshape(*q_l.shape[:-2], 1, *q_l.shape[-2:])
        qm = None if q_mask is None else np.asarray(q_mask)[..., None, :]
        a_sub = mmt(SceneSet(sub_tokens, sub_types), q, qm)          # [..., extra, d]
        negatives = concat([a_n.reshape(*a_n.shape[:-1], 1, a_n.shape[-1]), a_sub], axis=-2)
    else:
        negatives = a_n.reshape(*a_n.shape[:-1], 1, a_n.shape[-1])
    return AnswerEmbeddings(a_p, a_n, a_g, negatives)


def visual_contrastive_loss(emb: AnswerEmbeddings, temperature: float | None = None) -> Tensor:
    """InfoNCE of a_p against anchor a_g versus the negatives, averaged over items."""
    if emb.negatives is None or emb.a_g is None:
        return Tensor(0.0)
    a_p, a_g = emb.a_p, emb.a_g
    pos = tsum(a_p * a_g, axis=-1)                                         # [...]
    neg = tsum(a_p.reshape(*a_p.shape[:-1], 1, a_p.shape[-1]) * emb.negatives, axis=-1)
    logits = concat([pos.reshape(*pos.shape, 1), neg], axis=-1)
    if temperature:
        logits = logits * (1.0 / temperature)
    return -log_softmax(logits, axis=-1)[..., 0].mean()


class MultiChoiceHeads(Module):
    """One d->1 head per candidate slot."""

    def __init__(self, n_candidates: int, d: int, rng: np.random.Generator):
        super().__init__()
        bound = 1.0 / np.sqrt(d)
        self.weight = parameter(rng.uniform(-bound, bound, (n_candidates, d)))
        self.bias = parameter(np.zeros(n_candidates))

    def __call__(self, a_p: Tensor) -> Tensor:
        if a_p.shape[-2] != self.weight.shape[0]:
            raise ValueError(f"{a_p.shape[-2]} candidate embeddings for {self.weight.shape[0]} heads")
        return tsum(a_p * self.weight, axis=-1) + self.bias


def predict_mc(a_p: Tensor, heads: MultiChoiceHeads) -> tuple[Tensor, np.ndarray]:
    """Scores per candidate and the argmax (ties -> lowest index)."""
    scores = heads(a_p)
    return scores, np.argmax(scores.data, axis=-1)


def predict_open(a_p: Tensor, f_o: Linear) -> tuple[Tensor, np.ndarray]:
    if f_o.weight.shape[1] < 2:
        raise ValueError("open-ended prediction needs at least two answers")
    logits = f_o(a_p)
    return logits, np.argmax(logits.data, axis=-1)


def total_loss(l_qa, l_vc, l_sp, alpha: float, beta: float):
    if alpha < 0 or beta < 0:
        raise ValueError("loss weights must be non-negative")
    return l_qa + l_vc * alpha + l_sp * beta


def stack_candidates(embeddings: list[Tensor]) -> Tensor:
    return stack(embeddings, axis=-2)
