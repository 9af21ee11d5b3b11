"""Run the ablation grid on one dataset and tabulate the results."""

from __future__ import annotations

from pathlib import Path

from .config import ABLATIONS, STAR, TrainConfig
from .data import read_dataset, split_samples
from .evaluate import evaluate_samples
from .train import fit

VARIANT_LABELS = {
    "full": "VCSR",
    "no_qgr": "w/o QGR",
    "no_css": "w/o CSS",
    "no_sp": "w/o L_SP",
    "no_vc": "w/o L_VC",
    "star": "VCSR*",
}


def variant_config(base: TrainConfig, name: str) -> TrainConfig:
    if name == "star":
        return base.replace(**STAR)
    if name not in ABLATIONS:
        raise ValueError(f"unknown variant {name!r}")
    return base.replace(**ABLATIONS[name])


def run_grid(base: TrainConfig, dataset: str | Path, out_dir: str | Path | None = None,
             variants=tuple(ABLATIONS), split: str = "test", progress=None) -> list[dict]:
    header, samples = read_dataset(dataset)
    test = split_samples(samples, split)
    if base.mode != header.mode:
        base = base.replace(mode=header.mode)
    rows = []
    for name in variants:
        cfg = variant_config(base, name)
        sub = Path(out_dir) / name if out_dir is not None else None
        model, report = fit(cfg, header, samples, sub)
        ev = evaluate_samples(model, test)
        row = {"variant": name, "label": VARIANT_LABELS[name], "accuracy": ev["accuracy"],
               "scene_recall": ev["scene_recall"], "chance_recall": ev["chance_recall"],
               "best_epoch": report.best_epoch, "val_accuracy": report.best_val_accuracy}
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows


def format_table(rows: list[dict]) -> str:
    head = f"{'variant':<10} {'accuracy':>9} {'recall':>8} {'chance':>8} {'val_acc':>8}"
    lines = [head, "-" * len(head)]
    for r in rows:
        rec = "-" if r["scene_recall"] is None else f"{r['scene_recall']:.3f}"
        lines.append(f"{r['label']:<10} {r['accuracy']:>9.3f} {rec:>8} "
                     f"{r['chance_recall']:>8.3f} {r['val_accuracy']:>8.3f}")
    return "\n".join(lines)
