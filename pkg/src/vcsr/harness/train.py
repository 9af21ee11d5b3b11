"""Deterministic training loop."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..css import SegmentPool
from ..numcore import NonFiniteError
from .checkpoint import save_checkpoint
from .config import TrainConfig
from .data import DatasetError, DatasetHeader, iter_batches, read_dataset, split_samples
from .evaluate import evaluate_samples
from .model import VCSR, ModelDims
from .optim import AdamW, PlateauHalver


class TrainingDiverged(RuntimeError):
    """Loss or parameters became non-finite."""


@dataclass
class TrainReport:
    history: list[dict] = field(default_factory=list)
    loss_trace: list[float] = field(default_factory=list)
    best_epoch: int = -1
    best_val_accuracy: float = -1.0
    best_state: dict | None = None
    checkpoint: Path | None = None
    lr_halvings: list[int] = field(default_factory=list)


def dims_from_header(header: DatasetHeader) -> ModelDims:
    return ModelDims(header.d_in, header.n_frames, header.vocab_size, header.mode,
                     header.n_candidates or 5, header.n_answers)


def _rng(cfg: TrainConfig, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([cfg.seed, *keys]))


def _as_float(x) -> float:
    return float(x.item()) if hasattr(x, "item") else float(x)


class MetricsLog:
    """Append-only JSONL metrics sink; a None path keeps records in memory only."""

    def __init__(self, path: Path | None):
        self.path = path
        self.records: list[dict] = []

    def write(self, record: dict) -> None:
        self.records.append(record)
        if self.path is not None:
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, sort_keys=True) + "\n")


def _stored(state: dict) -> dict:
    # what a checkpoint holds, so in-memory and on-disk evaluation agree
    return {k: v.astype(np.float32).astype(np.float64) for k, v in state.items()}


def fit(cfg: TrainConfig, header: DatasetHeader, samples, out_dir: str | Path | None = None,
        progress=None) -> tuple[VCSR, TrainReport]:
    cfg.validate()
    if header.mode != cfg.mode:
        raise DatasetError(f"dataset mode {header.mode!r} does not match config mode {cfg.mode!r}")
    train_set = split_samples(samples, "train")
    val_set = split_samples(samples, "val")
    model = VCSR(cfg, dims_from_header(header))
    opt = AdamW(model.parameters(), cfg.lr, (cfg.beta1, cfg.beta2), weight_decay=cfg.weight_decay)
    sched = PlateauHalver(opt, cfg.plateau_patience, mode="max")
    pool = SegmentPool(cfg.pool_capacity)

    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    log = MetricsLog(out / "metrics.jsonl" if out is not None else None)
    report = TrainReport()

    steps_per_epoch = math.ceil(len(train_set) / cfg.batch_size)
    total = max(1, steps_per_epoch * cfg.epochs)
    step = 0
    for epoch in range(cfg.epochs):
        order = _rng(cfg, 2, epoch).permutation(len(train_set))
        sums = {"loss": 0.0, "qa": 0.0, "vc": 0.0, "sp": 0.0}
        correct = seen = 0
        for b_idx, batch in enumerate(iter_batches(train_set, cfg.batch_size, cfg.mode, order)):
            rng = _rng(cfg, 3, epoch, b_idx)
            temp = cfg.temperature(step, total)
            opt.zero_grad()
            try:
                res = model.forward(batch, rng=rng, temperature=temp, pool=pool)
                loss = res.loss
                if not np.isfinite(loss.data).all():
                    raise NonFiniteError("loss")
                loss.backward()
                opt.step()
                for p in model.parameters():
                    if not np.isfinite(p.data).all():
                        raise NonFiniteError("parameter update")
            except NonFiniteError as exc:
                raise TrainingDiverged(
                    f"non-finite values at epoch {epoch} batch {b_idx} (step {step}, "
                    f"lr={opt.lr:g}, temperature={temp:.3f}): {exc}") from exc
            model.feed_pool(pool, batch, res, rng)
            report.loss_trace.append(_as_float(loss.data))
            n = len(batch)
            sums["loss"] += _as_float(loss.data) * n
            for key in ("qa", "vc", "sp"):
                sums[key] += _as_float(getattr(res.parts[key], "data", res.parts[key])) * n
            correct += int((res.predictions == batch.targets).sum())
            seen += n
            step += 1

        log.write({"epoch": epoch, "split": "train", "lr": opt.lr,
                   "loss": sums["loss"] / seen, "loss_qa": sums["qa"] / seen,
                   "loss_vc": sums["vc"] / seen, "loss_sp": sums["sp"] / seen,
                   "accuracy": correct / seen, "scene_recall": None})
        val = evaluate_samples(model, val_set)
        log.write({"epoch": epoch, "split": "val", "lr": opt.lr, "loss": None, "loss_qa": None,
                   "loss_vc": None, "loss_sp": None, "accuracy": val["accuracy"],
                   "scene_recall": val["scene_recall"]})
        if val["accuracy"] > report.best_val_accuracy:
            report.best_val_accuracy = val["accuracy"]
            report.best_epoch = epoch
            report.best_state = _stored(model.state_dict())
            if out is not None:
                report.checkpoint = out / "best.ckpt"
                save_checkpoint(report.checkpoint, model,
                                {"epoch": epoch, "val_accuracy": val["accuracy"]})
        if sched.step(val["accuracy"]):
            report.lr_halvings.append(epoch)
        if progress is not None:
            progress(log.records[-2], log.records[-1])

    report.history = log.records
    if report.best_state is not None:
        model.load_state_dict(report.best_state)
    return model, report


def train(cfg: TrainConfig, dataset_path: str | Path, out_dir: str | Path | None = None,
          progress=None) -> tuple[VCSR, TrainReport]:
    header, samples = read_dataset(dataset_path)
    return fit(cfg, header, samples, out_dir, progress)
