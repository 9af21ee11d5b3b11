"""Dataset file format and batching.

One JSON header line, then one JSON record per sample. Tensor fields are
base64-encoded little-endian float32 with an explicit shape.
"""

from __future__ import annotations

import base64
import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..causalsim.synthetic import DatasetSpec, SyntheticSample
from ..encoders import PAD_ID, with_candidate

FORMAT = "vcsr-dataset"
VERSION = 1


class DatasetError(ValueError):
    """Malformed or incompatible dataset file."""


def encode_array(arr: np.ndarray) -> dict:
    f32 = np.asarray(arr, dtype="<f4")
    if not np.array_equal(f32.astype(np.float64), np.asarray(arr, dtype=np.float64)):
        raise DatasetError("array is not exactly representable as float32")
    return {"shape": list(f32.shape), "dtype": "<f4",
            "data": base64.b64encode(f32.tobytes()).decode("ascii")}


def decode_array(obj: dict) -> np.ndarray:
    if obj.get("dtype") != "<f4":
        raise DatasetError(f"unsupported dtype {obj.get('dtype')!r}")
    raw = base64.b64decode(obj["data"])
    arr = np.frombuffer(raw, dtype="<f4")
    shape = tuple(obj["shape"])
    if arr.size != int(np.prod(shape)):
        raise DatasetError("tensor payload does not match its shape")
    return arr.reshape(shape).astype(np.float64)


@dataclass
class DatasetHeader:
    d_in: int
    n_frames: int
    mode: str
    vocab_size: int
    n_candidates: int
    n_answers: int
    spec: dict

    def to_json(self) -> dict:
        return {"format": FORMAT, "version": VERSION, "d_in": self.d_in, "N": self.n_frames,
                "mode": self.mode, "vocab_size": self.vocab_size,
                "n_candidates": self.n_candidates, "n_answers": self.n_answers, "spec": self.spec}

    @classmethod
    def from_spec(cls, spec: DatasetSpec) -> "DatasetHeader":
        return cls(spec.d_in, spec.n_frames, spec.mode, spec.vocab_size,
                   spec.n_candidates if spec.mode == "mc" else 0, spec.n_answers, spec.to_dict())


def _record(s: SyntheticSample) -> dict:
    return {
        "video_id": s.video_id,
        "split": s.split,
        "frames": encode_array(s.frames),
        "question": s.question_tokens,
        "candidates": s.candidates,
        "answer_index": s.answer_index,
        "answer_id": s.answer_id,
        "causal_window": list(s.causal_window),
        "confounder_window": list(s.confounder_window),
        "metadata": s.metadata,
    }


def _dumps(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), default=_json_default)


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.bool_,)):
        return bool(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_dataset(path: str | Path, header: DatasetHeader, samples: list[SyntheticSample]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", encoding="utf-8", newline="\n") as fh:
        fh.write(_dumps(header.to_json()) + "\n")
        for s in samples:
            fh.write(_dumps(_record(s)) + "\n")


def read_dataset(path: str | Path) -> tuple[DatasetHeader, list[SyntheticSample]]:
    path = Path(path)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read dataset {path}: {exc}") from exc
    if not lines:
        raise DatasetError(f"{path} is empty")
    try:
        head = json.loads(lines[0])
        if head.get("format") != FORMAT or head.get("version") != VERSION:
            raise DatasetError(f"{path}: not a {FORMAT} v{VERSION} file")
        header = DatasetHeader(head["d_in"], head["N"], head["mode"], head["vocab_size"],
                               head["n_candidates"], head["n_answers"], head.get("spec", {}))
        samples = []
        for ln in lines[1:]:
            r = json.loads(ln)
            frames = decode_array(r["frames"])
            if frames.shape != (header.n_frames, header.d_in):
                raise DatasetError(f"{r['video_id']}: frames {frames.shape} disagree with header")
            samples.append(SyntheticSample(
                video_id=r["video_id"], split=r["split"], frames=frames,
                question_tokens=list(r["question"]), candidates=[list(c) for c in r["candidates"]],
                answer_index=int(r["answer_index"]), answer_id=int(r["answer_id"]),
                causal_window=tuple(r["causal_window"]),
                confounder_window=tuple(r["confounder_window"]), metadata=r.get("metadata", {}),
            ))
    except (KeyError, TypeError, json.JSONDecodeError, ValueError) as exc:
        if isinstance(exc, DatasetError):
            raise
        raise DatasetError(f"{path}: corrupt dataset ({exc})") from exc
    return header, samples


def split_samples(samples: list[SyntheticSample], split: str) -> list[SyntheticSample]:
    out = [s for s in samples if s.split == split]
    if not out:
        raise DatasetError(f"split {split!r} missing from dataset")
    return out


@dataclass
class Batch:
    frames: np.ndarray            # [B, N, d_in]
    question_ids: np.ndarray      # MC: [B, C, L]; open: [B, L]
    targets: np.ndarray           # [B]
    video_ids: np.ndarray         # [B] object
    causal_windows: np.ndarray    # [B, 2]
    samples: list

    def __len__(self) -> int:
        return len(self.samples)


def make_batch(samples: list[SyntheticSample], mode: str) -> Batch:
    if mode == "mc":
        seqs = [[with_candidate(s.question_tokens, c) for c in s.candidates] for s in samples]
        width = max(len(q) for row in seqs for q in row)
        n_cand = len(seqs[0])
        ids = np.full((len(samples), n_cand, width), PAD_ID, dtype=np.int64)
        for i, row in enumerate(seqs):
            if len(row) != n_cand:
                raise DatasetError("samples disagree on candidate count")
            for j, q in enumerate(row):
                ids[i, j, : len(q)] = q
    else:
        width = max(len(s.question_tokens) for s in samples)
        ids = np.full((len(samples), width), PAD_ID, dtype=np.int64)
        for i, s in enumerate(samples):
            ids[i, : len(s.question_tokens)] = s.question_tokens
    return Batch(
        frames=np.stack([s.frames for s in samples]),
        question_ids=ids,
        targets=np.array([s.answer_index for s in samples], dtype=np.int64),
        video_ids=np.array([s.video_id for s in samples], dtype=object),
        causal_windows=np.array([s.causal_window for s in samples], dtype=np.int64),
        samples=list(samples),
    )


def iter_batches(samples, batch_size: int, mode: str, order=None):
    idx = np.arange(len(samples)) if order is None else order
    for start in range(0, len(idx), batch_size):
        yield make_batch([samples[i] for i in idx[start:start + batch_size]], mode)
