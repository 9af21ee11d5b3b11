"""Synthetic confounded video-QA data with planted causal scenes.

Each video is Gaussian noise with two planted windows: a causal pattern that
fixes the answer (given the question's family key) and a confounder pattern
whose label agrees with the answer with probability ``rho`` for the split.
Answers never depend on the confounder.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from ..encoders import CLS_ID, N_SPECIAL

SPLITS = ("train", "val", "test")


@dataclass
class DatasetSpec:
    n_train: int = 2000
    n_val: int = 200
    n_test: int = 500
    n_frames: int = 24
    d_in: int = 32
    n_families: int = 4
    n_answers: int = 8
    rho_train: float = 0.9
    rho_test: float = 0.1
    window: int = 3
    confounder_window: int | None = None
    noise: float = 1.0
    causal_amp: float = 3.0
    confound_amp: float = 3.0
    mode: str = "mc"
    n_candidates: int = 5
    seed: int = 0

    def validate(self) -> None:
        for name in ("rho_train", "rho_test"):
            rho = getattr(self, name)
            if not 0.0 <= rho <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {rho}")
        cw = self.confounder_window or self.window
        if self.window < 1 or cw < 1:
            raise ValueError("window lengths must be positive")
        if self.window > self.n_frames / 2 or cw > self.n_frames / 2:
            raise ValueError(f"window length must be <= N/2 = {self.n_frames / 2}")
        if self.window + cw > self.n_frames:
            raise ValueError("causal and confounder windows cannot both fit")
        if self.mode not in ("mc", "open"):
            raise ValueError(f"mode must be 'mc' or 'open', got {self.mode!r}")
        if self.mode == "mc" and self.n_answers < self.n_candidates:
            raise ValueError("need at least as many answers as candidates")
        if self.n_answers < 2 or self.n_families < 1 or self.noise < 0:
            raise ValueError("invalid answer/family counts or noise level")
        if min(self.n_train, self.n_val, self.n_test) < 0:
            raise ValueError("split sizes must be non-negative")

    @property
    def vocab_size(self) -> int:
        return N_SPECIAL + self.n_families + self.n_answers

    def family_token(self, family: int) -> int:
        return N_SPECIAL + family

    def answer_token(self, answer: int) -> int:
        return N_SPECIAL + self.n_families + answer

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SyntheticSample:
    video_id: str
    split: str
    frames: np.ndarray                 # [N, d_in], float32-representable
    question_tokens: list[int]
    candidates: list[list[int]]        # MC only; empty in open mode
    answer_index: int                  # MC: candidate slot; open: answer id
    answer_id: int
    causal_window: tuple[int, int]
    confounder_window: tuple[int, int]
    metadata: dict = field(default_factory=dict)


@dataclass
class PatternBank:
    causal: np.ndarray     # [families, answers, d_in]
    confound: np.ndarray   # [answers, d_in]


def _unit_rows(rng: np.random.Generator, shape) -> np.ndarray:
    x = rng.normal(size=shape)
    return x / np.linalg.norm(x, axis=-1, keepdims=True)


def make_patterns(spec: DatasetSpec) -> PatternBank:
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 0xC0FFEE]))
    causal = _unit_rows(rng, (spec.n_families, spec.n_answers, spec.d_in)) * spec.causal_amp
    confound = _unit_rows(rng, (spec.n_answers, spec.d_in)) * spec.confound_amp
    return PatternBank(causal, confound)


def _place_windows(rng, n: int, w: int, wc: int) -> tuple[tuple[int, int], tuple[int, int]]:
    while True:
        s = int(rng.integers(0, n - w + 1))
        c = int(rng.integers(0, n - wc + 1))
        if s + w <= c or c + wc <= s:
            return (s, s + w), (c, c + wc)


def make_sample(spec: DatasetSpec, bank: PatternBank, split: str, index: int) -> SyntheticSample:
    split_no = SPLITS.index(split)
    rng = np.random.default_rng(np.random.SeedSequence([spec.seed, split_no, index]))
    rho = spec.rho_train if split in ("train", "val") else spec.rho_test
    family = int(rng.integers(spec.n_families))
    answer = int(rng.integers(spec.n_answers))
    if rng.random() < rho:
        label = answer
    else:
        others = [a for a in range(spec.n_answers) if a != answer]
        label = int(rng.choice(others))

    wc = spec.confounder_window or spec.window
    causal_win, conf_win = _place_windows(rng, spec.n_frames, spec.window, wc)
    frames = rng.normal(0.0, spec.noise, (spec.n_frames, spec.d_in)) if spec.noise > 0 \
        else np.zeros((spec.n_frames, spec.d_in))
    frames[causal_win[0]:causal_win[1]] += bank.causal[family, answer]
    frames[conf_win[0]:conf_win[1]] += bank.confound[label]
    frames = frames.astype(np.float32).astype(np.float64)

    question = [CLS_ID, spec.family_token(family)]
    if spec.mode == "mc":
        distractors = rng.choice([a for a in range(spec.n_answers) if a != answer],
                                 size=spec.n_candidates - 1, replace=False)
        options = np.concatenate([[answer], distractors])
        rng.shuffle(options)
        candidates = [[spec.answer_token(int(a))] for a in options]
        answer_index = int(np.flatnonzero(options == answer)[0])
    else:
        candidates = []
        answer_index = answer

    return SyntheticSample(
        video_id=f"{split}-{index:06d}",
        split=split,
        frames=frames,
        question_tokens=question,
        candidates=candidates,
        answer_index=answer_index,
        answer_id=answer,
        causal_window=causal_win,
        confounder_window=conf_win,
        metadata={"family": family, "confounder_label": label,
                  "confounder_agrees": label == answer},
    )


def generate_dataset(spec: DatasetSpec) -> list[SyntheticSample]:
    spec.validate()
    bank = make_patterns(spec)
    counts = {"train": spec.n_train, "val": spec.n_val, "test": spec.n_test}
    return [make_sample(spec, bank, split, i) for split in SPLITS for i in range(counts[split])]


def nearest_pattern_answer(sample: SyntheticSample, bank: PatternBank) -> int:
    """Oracle classifier: mean of the true causal window vs the family's patterns."""
    s, e = sample.causal_window
    evidence = sample.frames[s:e].mean(axis=0)
    family = sample.metadata["family"]
    dist = np.linalg.norm(bank.causal[family] - evidence, axis=-1)
    return int(np.argmin(dist))
