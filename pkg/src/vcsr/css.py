"""Causal scene separator.

Scores refined segments against the question, draws ``k`` positive segments by
repeated straight-through Gumbel-Softmax without replacement, assembles
negatives from low-scoring own segments and a cross-video pool, and keeps one
frame per chosen segment. All tensors may carry arbitrary leading batch axes.
"""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from .numcore import (
    Tensor,
    cosine_similarity,
    gumbel_softmax,
    log,
    matmul,
    one_hot_argmax,
    relu,
    softmax,
    stack,
    straight_through,
)
from .numcore.nn import Linear, Module


class InsufficientNegatives(ValueError):
    """Fewer than k sub-threshold own segments plus pool entries."""


@dataclass
class PoolEntry:
    feature: np.ndarray
    frame: np.ndarray
    video_id: str
    entry_id: int


class SegmentPool:
    """FIFO ring buffer of detached segment features from earlier batches."""

    def __init__(self, capacity: int = 512):
        self.capacity = capacity
        self._entries: deque[PoolEntry] = deque(maxlen=capacity)
        self._ids = itertools.count()

    def __len__(self) -> int:
        return len(self._entries)

    def add(self, feature: np.ndarray, frame: np.ndarray, video_id: str) -> None:
        self._entries.append(PoolEntry(np.array(feature, dtype=np.float64),
                                       np.array(frame, dtype=np.float64),
                                       str(video_id), next(self._ids)))

    def candidates(self, exclude_video: str) -> list[PoolEntry]:
        return [e for e in self._entries if e.video_id != exclude_video]


@dataclass
class SceneSelection:
    positive_segments: Tensor           # S_p [..., k, d]
    positive_indices: np.ndarray        # [..., k]
    positive_frames: Tensor             # F_p [..., k, d]
    positive_frame_indices: np.ndarray  # [..., k]
    negative_segments: Tensor | None    # S_n [..., k, d]
    negative_frames: Tensor | None      # F_n [..., k, d]
    negative_provenance: list = field(default_factory=list)
    attention_scores: Tensor | None = None  # a_s [..., T]


# ------------------------------------------------------------ scoring
def segment_attention_scores(S_star: Tensor, q_g: Tensor, g_q: Linear, g_s: Linear) -> Tensor:
    """``a_s = softmax(g_q(q) . g_s(S*)^T)`` over the segment axis."""
    keys = g_s(S_star)                                     # [..., T, d']
    query = g_q(q_g).reshape(*q_g.shape[:-1], -1, 1)       # [..., d', 1]
    logits = matmul(keys, query)                           # [..., T, 1]
    return softmax(logits.reshape(*logits.shape[:-1]), axis=-1)


# ------------------------------------------------------------ positives
def _draw(logits: Tensor, temperature: float, rng, hard: bool, mask: np.ndarray,
          greedy: bool) -> Tensor:
    if greedy:
        soft = softmax(logits * (1.0 / temperature), axis=-1, mask=mask)
        return straight_through(soft, one_hot_argmax(np.where(mask, logits.data, -np.inf)))
    return gumbel_softmax(logits, temperature, hard, rng, mask=mask)


def select_positive_segments(S_star: Tensor, a_s: Tensor, k: int, temperature: float,
                             rng: np.random.Generator | None, hard: bool = True,
                             greedy: bool = False):
    """Draw ``k`` distinct segments.

    Returns ``(S_p, indices, weights)`` where ``weights`` [..., k, T] holds the
    selection vectors (one-hot forward values in hard/greedy mode).
    """
    n_seg = a_s.shape[-1]
    if not 1 <= k <= n_seg:
        raise ValueError(f"cannot select k={k} of {n_seg} segments")
    logits = log(a_s)
    mask = np.ones(a_s.shape, dtype=bool)
    rows, picks = [], []
    for _ in range(k):
        y = _draw(logits, temperature, rng, hard, mask, greedy)
        idx = y.data.argmax(axis=-1)
        np.put_along_axis(mask, idx[..., None], False, axis=-1)
        rows.append(y)
        picks.append(idx)
    weights = stack(rows, axis=-2)                         # [..., k, T]
    return matmul(weights, S_star), np.stack(picks, axis=-1), weights


# ------------------------------------------------------------ negatives
def build_negative_set(S_star: Tensor, a_s: Tensor, indices_p: np.ndarray, pool: SegmentPool | None,
                       tau: float, k: int, rng: np.random.Generator, video_ids):
    """Sample ``k`` negatives per item from sub-threshold own segments plus the pool.

    Returns ``(S_n, own_weights, pool_frames, own_rows, provenance)``; own rows
    are exact rows of S*, pool rows are constants.
    """
    lead = a_s.shape[:-1]
    n_seg = a_s.shape[-1]
    d = S_star.shape[-1]
    flat_scores = a_s.data.reshape(-1, n_seg)
    flat_pos = np.asarray(indices_p).reshape(-1, indices_p.shape[-1])
    ids = np.broadcast_to(np.asarray(video_ids, dtype=object), lead).reshape(-1)
    n_items = flat_scores.shape[0]

    own_w = np.zeros((n_items, k, n_seg))
    pool_feat = np.zeros((n_items, k, d))
    pool_frame = np.zeros((n_items, k, d))
    own_rows = np.zeros((n_items, k), dtype=bool)
    provenance = []
    for i in range(n_items):
        chosen = set(flat_pos[i].tolist())
        own = [("own", t) for t in range(n_seg) if flat_scores[i, t] < tau and t not in chosen]
        foreign = [("pool", e) for e in pool.candidates(ids[i])] if pool is not None else []
        cands = own + foreign
        if len(cands) < k:
            raise InsufficientNegatives(f"only {len(cands)} negative candidates for k={k}")
        picks = rng.choice(len(cands), size=k, replace=False)
        prov = []
        for j, c in enumerate(picks):
            kind, ref = cands[c]
            if kind == "own":
                own_w[i, j, ref] = 1.0
                own_rows[i, j] = True
                prov.append(("own", int(ref)))
            else:
                pool_feat[i, j] = ref.feature
                pool_frame[i, j] = ref.frame
                prov.append(("pool", ref.entry_id, ref.video_id))
        provenance.append(prov)

    own_w = own_w.reshape(*lead, k, n_seg)
    S_n = matmul(Tensor(own_w), S_star) + Tensor(pool_feat.reshape(*lead, k, d))
    return (S_n, own_w, pool_frame.reshape(*lead, k, d), own_rows.reshape(*lead, k),
            provenance)


# ------------------------------------------------------------ frame filter
def aligned_frames(weights: Tensor, per_segment_frames: Tensor) -> Tensor:
    """Frames of the selected segments: [..., k, T] x [..., T, m, d] -> [..., k, m, d]."""
    *lead, n_seg, m, d = per_segment_frames.shape
    flat = per_segment_frames.reshape(*lead, n_seg, m * d)
    out = matmul(weights, flat)
    return out.reshape(*out.shape[:-1], m, d)


def filter_frames(weights: Tensor, per_segment_frames: Tensor, q_g: Tensor, g_q: Linear,
                  g_s: Linear, temperature: float, rng, hard: bool = True, greedy: bool = False):
    """One straight-through Gumbel draw over each selected segment's frames.

    Returns ``(frames [..., k, d], slot [..., k])`` with ``slot`` the within-segment
    position of the chosen frame.
    """
    frames = aligned_frames(weights, per_segment_frames)          # [..., k, m, d]
    q = q_g.reshape(*q_g.shape[:-1], 1, q_g.shape[-1])             # [..., 1, d]
    scores = segment_attention_scores(frames, q, g_q, g_s)         # [..., k, m]
    m = scores.shape[-1]
    mask = np.ones(scores.shape, dtype=bool)
    y = _draw(log(scores), temperature, rng, hard, mask, greedy)
    picked = matmul(y.reshape(*y.shape[:-1], 1, m), frames)
    return picked.reshape(*picked.shape[:-2], picked.shape[-1]), y.data.argmax(axis=-1)


# ------------------------------------------------------------ semantic preserving loss
def semantic_preserving_loss(q_g: Tensor, F_p: Tensor, S_p: Tensor) -> Tensor:
    """``sum_i max(I_f^i - I_s^i, 0)`` with ``[I_f, I_s]`` a 2-way softmax of cosine
    similarities to the question; averaged over leading batch axes."""
    if F_p.shape[-2] < 1:
        raise ValueError("need at least one positive pair")
    q = q_g.reshape(*q_g.shape[:-1], 1, q_g.shape[-1])
    sim_f = cosine_similarity(q, F_p)                              # [..., k]
    sim_s = cosine_similarity(q, S_p)
    imp = softmax(stack([sim_f, sim_s], axis=-1), axis=-1)         # [..., k, 2]
    hinge = relu(imp[..., 0] - imp[..., 1]).sum(axis=-1)
    return hinge.mean()


# ------------------------------------------------------------ module
class CausalSceneSeparator(Module):
    def __init__(self, d: int, rng: np.random.Generator, k: int = 4):
        super().__init__()
        self.k = k
        self.g_q = Linear(d, d, rng, bias=False)
        self.g_s = Linear(d, d, rng, bias=False)

    def scores(self, S_star: Tensor, q_g: Tensor) -> Tensor:
        return segment_attention_scores(S_star, q_g, self.g_q, self.g_s)

    def __call__(self, S_star: Tensor, per_segment_frames: Tensor, q_g: Tensor, *,
                 temperature: float, rng: np.random.Generator | None, hard: bool = True,
                 greedy: bool = False, tau: float | None = None, pool: SegmentPool | None = None,
                 video_ids=None, negatives: bool = True,
                 skip_short: bool = False) -> SceneSelection:
        """With ``skip_short`` a batch lacking negative candidates returns positives only."""
        n_seg = S_star.shape[-2]
        a_s = self.scores(S_star, q_g)
        S_p, idx_p, w_p = select_positive_segments(S_star, a_s, self.k, temperature, rng,
                                                   hard=hard, greedy=greedy)
        F_p, slot_p = filter_frames(w_p, per_segment_frames, q_g, self.g_q, self.g_s,
                                    temperature, rng, hard=hard, greedy=greedy)
        sel = SceneSelection(S_p, idx_p, F_p, idx_p + slot_p, None, None, [], a_s)
        if not negatives:
            return sel
        tau = 1.0 / n_seg if tau is None else tau
        try:
            S_n, own_w, pool_frames, own_rows, prov = build_negative_set(
                S_star, a_s, idx_p, pool, tau, self.k, rng,
                video_ids if video_ids is not None else "")
        except InsufficientNegatives:
            if skip_short:
                return sel
            raise
        F_own, _ = filter_frames(Tensor(own_w), per_segment_frames, q_g, self.g_q, self.g_s,
                                 temperature, rng, hard=hard, greedy=greedy)
        sel.negative_segments = S_n
        sel.negative_frames = F_own * own_rows[..., None].astype(float) + Tensor(pool_frames)
        sel.negative_provenance = prov
        return sel
