"""Checkpoint files.

Layout: a ``VCSRCKPT 1`` magic line, one JSON header line (config, model dims
and a per-parameter manifest with crc32), then the raw little-endian float32
payload in manifest order. Values are stored as float32, so a model restored
from disk is what gets evaluated.
"""

from __future__ import annotations

import json
import zlib
from pathlib import Path

import numpy as np

from .config import TrainConfig
from .model import VCSR, ModelDims

MAGIC = b"VCSRCKPT 1\n"


class CheckpointError(ValueError):
    """Corrupt or incompatible checkpoint."""


def save_checkpoint(path: str | Path, model: VCSR, extra: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    manifest, chunks, offset = [], [], 0
    for name, p in model.named_parameters():
        raw = np.ascontiguousarray(p.data, dtype="<f4").tobytes()
        manifest.append({"name": name, "shape": list(p.shape), "offset": offset,
                         "nbytes": len(raw), "crc32": zlib.crc32(raw)})
        chunks.append(raw)
        offset += len(raw)
    header = {"config": model.cfg.to_dict(), "dims": model.dims.to_dict(),
              "params": manifest, "extra": extra or {}}
    tmp = path.with_suffix(path.suffix + ".tmp")
    with tmp.open("wb") as fh:
        fh.write(MAGIC)
        fh.write(json.dumps(header, sort_keys=True).encode("utf-8") + b"\n")
        for c in chunks:
            fh.write(c)
    tmp.replace(path)


def read_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    path = Path(path)
    try:
        blob = path.read_bytes()
    except OSError as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    if not blob.startswith(MAGIC):
        raise CheckpointError(f"{path}: bad magic")
    nl = blob.find(b"\n", len(MAGIC))
    if nl < 0:
        raise CheckpointError(f"{path}: truncated header")
    try:
        header = json.loads(blob[len(MAGIC):nl])
    except json.JSONDecodeError as exc:
        raise CheckpointError(f"{path}: unreadable header") from exc
    payload = blob[nl + 1:]
    state = {}
    for entry in header["params"]:
        start, n = entry["offset"], entry["nbytes"]
        raw = payload[start:start + n]
        if len(raw) != n:
            raise CheckpointError(f"{path}: payload truncated at {entry['name']}")
        if zlib.crc32(raw) != entry["crc32"]:
            raise CheckpointError(f"{path}: checksum mismatch for {entry['name']}")
        state[entry["name"]] = np.frombuffer(raw, dtype="<f4").reshape(entry["shape"]).astype(np.float64)
    return header, state


def load_checkpoint(path: str | Path) -> tuple[VCSR, dict]:
    header, state = read_checkpoint(path)
    cfg = TrainConfig(**header["config"])
    model = VCSR(cfg, ModelDims(**header["dims"]))
    try:
        model.load_state_dict(state)
    except (KeyError, ValueError) as exc:
        raise CheckpointError(f"{path}: {exc}") from exc
    return model, header


def round_to_storage(model: VCSR) -> None:
    """Round parameters to float32 in place, matching what a checkpoint holds."""
    for p in model.parameters():
        p.data = p.data.astype(np.float32).astype(np.float64)
