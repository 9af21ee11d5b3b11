"""VCSR model wiring: encoders -> QGR -> CSS -> reasoner -> losses."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..css import CausalSceneSeparator, SceneSelection, SegmentPool, semantic_preserving_loss
from ..encoders import FrameProjector, QuestionEncoder
from ..numcore import Tensor, cross_entropy, no_grad
from ..numcore.nn import Linear, Module
from ..qgr import QuestionGuidedRefiner, SegmentSet, mean_pool_segments
from ..reasoner import (
    POS_SEGMENT,
    MultiChoiceHeads,
    MultiModalTransformer,
    SceneSet,
    answer_embeddings,
    negative_scenes,
    positive_scenes,
    total_loss,
    visual_contrastive_loss,
)
from .config import TrainConfig
from .data import Batch


@dataclass
class ModelDims:
    d_in: int
    n_frames: int
    vocab_size: int
    mode: str
    n_candidates: int = 5
    n_answers: int = 8

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ForwardResult:
    logits: Tensor
    predictions: np.ndarray
    loss: Tensor
    parts: dict = field(default_factory=dict)
    selected: np.ndarray | None = None   # [B, k] positive segment indices (true candidate in MC)
    selection: SceneSelection | None = None
    segments: SegmentSet | None = None


class VCSR(Module):
    def __init__(self, cfg: TrainConfig, dims: ModelDims):
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        self.dims = dims
        rng = np.random.default_rng(np.random.SeedSequence([cfg.seed, 1]))
        d = cfg.d
        self.n_segments = dims.n_frames - cfg.m + 1
        if self.n_segments < cfg.k:
            raise ValueError(f"T={self.n_segments} segments cannot supply k={cfg.k} positives")
        self.projector = FrameProjector(dims.d_in, d, rng)
        self.question = QuestionEncoder(dims.vocab_size, d, cfg.max_question_len, cfg.heads, rng,
                                        layers=cfg.question_layers)
        if cfg.use_qgr:
            self.qgr = QuestionGuidedRefiner(d, cfg.m, cfg.heads, cfg.isa_layers, rng,
                                             cfg.ffn_mult, cfg.cma_dk or None)
        if cfg.use_css:
            self.css = CausalSceneSeparator(d, rng, cfg.k)
            n_scene = 4 * cfg.k
        else:
            n_scene = self.n_segments
        self.mmt = MultiModalTransformer(d, cfg.heads, cfg.mmt_layers,
                                         n_scene + cfg.max_question_len + 1, rng,
                                         cfg.ffn_mult, cfg.readout)
        if dims.mode == "mc":
            self.answer_head = MultiChoiceHeads(dims.n_candidates, d, rng)
        else:
            self.answer_head = Linear(d, dims.n_answers, rng)

    # ------------------------------------------------------------------ pieces
    def segments(self, frames: Tensor, q_g: Tensor) -> SegmentSet:
        """Refined segments; in MC mode q_g is [B, C, d] and frames are shared."""
        mc = q_g.ndim == 3
        if not self.cfg.use_qgr:
            seg = mean_pool_segments(frames, self.cfg.m)
            if mc:
                seg.refined = seg.refined.reshape(seg.refined.shape[0], 1, *seg.refined.shape[1:])
                seg.per_segment_frames = seg.per_segment_frames.reshape(
                    seg.per_segment_frames.shape[0], 1, *seg.per_segment_frames.shape[1:])
            return seg
        post = self.qgr.mix(frames)                                   # [B, T, m, d]
        if mc:
            post = post.reshape(post.shape[0], 1, *post.shape[1:])
        return self.qgr.refine(post, q_g)

    def encode_questions(self, ids: np.ndarray):
        if ids.ndim == 3:
            b, c, n = ids.shape
            enc = self.question.encode_ids(ids.reshape(b * c, n))
            d = enc.q_g.shape[-1]
            return (enc.q_g.reshape(b, c, d), enc.q_l.reshape(b, c, n - 1, d),
                    enc.mask.reshape(b, c, n - 1))
        enc = self.question.encode_ids(ids)
        return enc.q_g, enc.q_l, enc.mask

    # ------------------------------------------------------------------ forward
    def forward(self, batch: Batch, *, rng: np.random.Generator | None, temperature: float = 1.0,
                training: bool = True, pool: SegmentPool | None = None,
                soft: bool | None = None) -> ForwardResult:
        cfg = self.cfg
        mc = self.dims.mode == "mc"
        frames = self.projector(Tensor(batch.frames))
        q_g, q_l, q_mask = self.encode_questions(batch.question_ids)
        seg = self.segments(frames, q_g)
        hard = cfg.hard_selection if soft is None else not soft
        parts = {"qa": 0.0, "vc": 0.0, "sp": 0.0}
        selection = None
        selected = None

        if cfg.use_css:
            want_vc = training and cfg.effective_alpha > 0 and cfg.n_negatives > 0
            vids = batch.video_ids
            if mc:
                vids = np.repeat(vids[:, None], q_g.shape[1], axis=1)
            selection = self.css(
                seg.refined, seg.per_segment_frames, q_g,
                temperature=temperature, rng=rng, hard=hard, greedy=not training,
                tau=cfg.tau or None, pool=pool, video_ids=vids, negatives=want_vc,
                skip_short=True)
            C_p = positive_scenes(selection.positive_segments, selection.positive_frames)
            # an empty pool early in training can leave too few negatives; skip L_VC then
            if want_vc and selection.negative_segments is not None:
                C_n = negative_scenes(selection.negative_segments, selection.negative_frames)
                emb = answer_embeddings(C_p, C_n, q_l, cfg.n_negatives, rng, self.mmt, q_mask,
                                        subset_size=cfg.k)
                l_vc = visual_contrastive_loss(emb, cfg.vc_temperature or None)
                parts["vc"] = l_vc
                a_p = emb.a_p
            else:
                a_p = self.mmt(C_p, q_l, q_mask)
            if training and cfg.effective_beta > 0:
                parts["sp"] = semantic_preserving_loss(q_g, selection.positive_frames,
                                                       selection.positive_segments)
            idx = selection.positive_indices
            selected = idx[np.arange(len(batch)), batch.targets] if mc else idx
        else:
            scenes = SceneSet(seg.refined, np.full(self.n_segments, POS_SEGMENT))
            a_p = self.mmt(scenes, q_l, q_mask)

        logits = self.answer_head(a_p)
        parts["qa"] = cross_entropy(logits, batch.targets)
        loss = total_loss(parts["qa"], parts["vc"], parts["sp"],
                          cfg.effective_alpha, cfg.effective_beta)
        return ForwardResult(logits, np.argmax(logits.data, axis=-1), loss, parts,
                             selected, selection, seg)

    def predict(self, batch: Batch) -> ForwardResult:
        with no_grad():
            return self.forward(batch, rng=None, training=False)

    def feed_pool(self, pool: SegmentPool, batch: Batch, result: ForwardResult,
                  rng: np.random.Generator) -> None:
        """Store one detached segment (and its most-attended frame) per sample."""
        seg = result.segments
        if seg is None:
            return
        refined = seg.refined.data
        frames = seg.per_segment_frames.data
        attn = seg.attention.data if seg.attention is not None else None
        mc = refined.ndim == 4
        for b in range(len(batch)):
            t = int(rng.integers(self.n_segments))
            c = int(batch.targets[b]) if mc else None
            if mc:
                feat = refined[b, min(c, refined.shape[1] - 1), t]
                seg_frames = frames[b, 0, t]
                weights = attn[b, c, t] if attn is not None else None
            else:
                feat = refined[b, t]
                seg_frames = frames[b, t]
                weights = attn[b, t] if attn is not None else None
            j = int(np.argmax(weights)) if weights is not None else seg_frames.shape[0] // 2
            pool.add(feat, seg_frames[j], batch.video_ids[b])
