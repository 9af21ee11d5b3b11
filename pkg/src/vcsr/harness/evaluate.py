"""Accuracy, causal-scene recall and its chance baseline."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .data import DatasetError, iter_batches, read_dataset, split_samples
from .model import VCSR


def overlapping_segments(window: tuple[int, int], n_frames: int, m: int) -> np.ndarray:
    """Indices t whose span [t, t+m) intersects the frame window [s, e)."""
    s, e = window
    T = n_frames - m + 1
    lo, hi = max(0, s - m + 1), min(e - 1, T - 1)
    return np.arange(lo, hi + 1) if hi >= lo else np.arange(0)


def scene_recall(selected, window: tuple[int, int], n_frames: int, m: int, k: int) -> float:
    hits_set = set(overlapping_segments(window, n_frames, m).tolist())
    if not hits_set:
        return 0.0
    hits = len({int(t) for t in selected} & hits_set)
    return hits / min(k, len(hits_set))


def chance_recall(window: tuple[int, int], n_frames: int, m: int, k: int) -> float:
    """Expected recall of k distinct uniform draws from the T segments."""
    T = n_frames - m + 1
    w_o = len(overlapping_segments(window, n_frames, m))
    if w_o == 0:
        return 0.0
    return (k * w_o / T) / min(k, w_o)


def evaluate_samples(model: VCSR, samples, batch_size: int = 64) -> dict:
    dims, cfg = model.dims, model.cfg
    correct, recalls, chances, leaks = [], [], [], []
    for batch in iter_batches(samples, batch_size, dims.mode):
        res = model.predict(batch)
        correct.extend((res.predictions == batch.targets).tolist())
        for i, s in enumerate(batch.samples):
            chances.append(chance_recall(s.causal_window, dims.n_frames, cfg.m, cfg.k))
            if res.selected is not None:
                recalls.append(scene_recall(res.selected[i], s.causal_window,
                                            dims.n_frames, cfg.m, cfg.k))
                conf = set(overlapping_segments(s.confounder_window, dims.n_frames, cfg.m).tolist())
                leaks.append(np.mean([int(t) in conf for t in res.selected[i]]))
    correct = np.array(correct, dtype=bool)
    out = {
        "n": int(correct.size),
        "accuracy": float(correct.mean()) if correct.size else 0.0,
        "scene_recall": float(np.mean(recalls)) if recalls else None,
        "chance_recall": float(np.mean(chances)) if chances else 0.0,
        # share of selected segments touching the confounder window
        "confounder_share": float(np.mean(leaks)) if leaks else None,
        "breakdown": _breakdown(samples, correct),
    }
    return out


def _breakdown(samples, correct: np.ndarray) -> dict:
    groups: dict[str, list[bool]] = {}
    for s, ok in zip(samples, correct):
        groups.setdefault(f"family={s.metadata.get('family')}", []).append(bool(ok))
        agree = "agree" if s.metadata.get("confounder_agrees") else "disagree"
        groups.setdefault(f"confounder={agree}", []).append(bool(ok))
    return {g: {"n": len(v), "accuracy": float(np.mean(v))} for g, v in sorted(groups.items())}


def evaluate(checkpoint: str | Path, dataset: str | Path, split: str = "test") -> dict:
    from .checkpoint import load_checkpoint

    model, _ = load_checkpoint(checkpoint)
    header, samples = read_dataset(dataset)
    if (header.d_in, header.n_frames, header.mode) != (model.dims.d_in, model.dims.n_frames,
                                                        model.dims.mode):
        raise DatasetError("dataset is incompatible with the checkpoint's model dims")
    return evaluate_samples(model, split_samples(samples, split))
