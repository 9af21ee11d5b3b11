import json

import numpy as np
import pytest

from vcsr.causalsim import DatasetSpec, generate_dataset
from vcsr.harness.ablate import VARIANT_LABELS, format_table, variant_config
from vcsr.harness.checkpoint import CheckpointError, load_checkpoint, read_checkpoint, save_checkpoint
from vcsr.harness.config import STAR, TrainConfig, dumps_config, make_config, parse_pairs
from vcsr.harness.data import (
    DatasetError,
    DatasetHeader,
    make_batch,
    read_dataset,
    split_samples,
    write_dataset,
)
from vcsr.harness.evaluate import (
    chance_recall,
    evaluate,
    evaluate_samples,
    overlapping_segments,
    scene_recall,
)
from vcsr.harness.model import VCSR
from vcsr.harness.optim import AdamW, PlateauHalver
from vcsr.harness.train import dims_from_header, fit
from vcsr.numcore import Tensor


def _spec(mode="open", **kw):
    base = dict(n_train=200, n_val=40, n_test=40, n_frames=12, d_in=8, n_families=2,
                n_answers=6, window=2, mode=mode, seed=3)
    base.update(kw)
    return DatasetSpec(**base)


def _micro(mode="open", **kw):
    return make_config("micro", mode=mode, d=16, **kw)


@pytest.fixture(scope="module")
def open_data():
    spec = _spec()
    return DatasetHeader.from_spec(spec), generate_dataset(spec)


@pytest.fixture(scope="module")
def trained(open_data, tmp_path_factory):
    header, samples = open_data
    out = tmp_path_factory.mktemp("run")
    model, report = fit(_micro(epochs=5), header, samples, out)
    return model, report, out


# ---------------------------------------------------------------- config
def test_profiles_and_validation():
    assert make_config("desk").d == 64
    assert TrainConfig().alpha == 0.0125 and TrainConfig().beta == 0.04
    with pytest.raises(ValueError):
        make_config("desk", d=30, heads=4)
    with pytest.raises(ValueError):
        make_config("huge")
    with pytest.raises(ValueError):
        make_config("micro", alpha=-1.0)


def test_config_pairs_round_trip():
    cfg = make_config("micro", lr=0.01, use_vc=False)
    kw = parse_pairs(dumps_config(cfg).splitlines(), TrainConfig)
    assert TrainConfig(**kw) == cfg
    with pytest.raises(ValueError):
        parse_pairs(["nope=1"], TrainConfig)
    with pytest.raises(ValueError):
        parse_pairs(["use_vc=maybe"], TrainConfig)


def test_variant_configs():
    base = _micro()
    assert variant_config(base, "no_qgr").use_qgr is False
    star = variant_config(base, "star")
    assert star.effective_alpha == 0 and star.effective_beta == 0 and not star.use_css
    assert set(VARIANT_LABELS) >= {"full", "no_qgr", "no_css", "no_sp", "no_vc"}
    with pytest.raises(ValueError):
        variant_config(base, "no_everything")
    table = format_table([{"variant": "full", "label": "VCSR", "accuracy": 0.5,
                           "scene_recall": 0.4, "chance_recall": 0.3, "best_epoch": 1,
                           "val_accuracy": 0.6}])
    assert "VCSR" in table and "0.500" in table


# ---------------------------------------------------------------- optimizer
def test_adamw_first_step_moves_by_lr():
    p = Tensor(np.array([1.0, -2.0]), requires_grad=True)
    opt = AdamW([p], lr=0.1)
    p.grad = np.array([3.0, -0.5])
    opt.step()
    assert np.allclose(p.data, [0.9, -1.9], atol=1e-7)


def test_plateau_halving_schedule():
    p = Tensor(np.zeros(1), requires_grad=True)
    opt = AdamW([p], lr=1.0)
    sched = PlateauHalver(opt, patience=3)
    halved = [sched.step(v) for v in [0.5, 0.6, 0.6, 0.55, 0.6, 0.7, 0.7, 0.7, 0.7, 0.1, 0.1, 0.1]]
    assert [i for i, h in enumerate(halved) if h] == [4, 8, 11]
    assert opt.lr == 0.125


# ---------------------------------------------------------------- data
def test_dataset_round_trip_and_missing_split(tmp_path, open_data):
    header, samples = open_data
    write_dataset(tmp_path / "d.jsonl", header, samples)
    h2, s2 = read_dataset(tmp_path / "d.jsonl")
    assert h2 == header and len(s2) == len(samples)
    assert all(np.array_equal(a.frames, b.frames) for a, b in zip(samples, s2))
    only_train = [s for s in samples if s.split == "train"]
    with pytest.raises(DatasetError):
        split_samples(only_train, "test")


def test_corrupt_dataset(tmp_path):
    (tmp_path / "bad.jsonl").write_text('{"format": "other"}\n')
    with pytest.raises(DatasetError):
        read_dataset(tmp_path / "bad.jsonl")


# ---------------------------------------------------------------- model
def test_star_loss_is_pure_qa(open_data):
    header, samples = open_data
    cfg = _micro(**STAR)
    model = VCSR(cfg, dims_from_header(header))
    res = model.forward(make_batch(samples[:8], "open"), rng=np.random.default_rng(0))
    assert res.loss.item() == res.parts["qa"].item()
    assert res.selected is None


def test_zero_weights_leave_only_qa(open_data):
    header, samples = open_data
    model = VCSR(_micro(alpha=0.0, beta=0.0), dims_from_header(header))
    res = model.forward(make_batch(samples[:8], "open"), rng=np.random.default_rng(0))
    assert res.loss.item() == res.parts["qa"].item()


def test_untrained_mc_accuracy_near_chance():
    spec = _spec("mc", n_train=0, n_val=0, n_test=1200)
    samples = generate_dataset(spec)
    model = VCSR(_micro("mc"), dims_from_header(DatasetHeader.from_spec(spec)))
    res = evaluate_samples(model, samples, batch_size=200)
    assert res["n"] == 1200
    assert abs(res["accuracy"] - 0.2) <= 0.05


def test_untrained_recall_near_chance():
    spec = _spec(n_train=0, n_val=0, n_test=1000)
    samples = generate_dataset(spec)
    model = VCSR(_micro(), dims_from_header(DatasetHeader.from_spec(spec)))
    res = evaluate_samples(model, samples, batch_size=250)
    assert abs(res["scene_recall"] - res["chance_recall"]) <= 0.1


def test_recall_definitions():
    assert overlapping_segments((4, 6), 12, 3).tolist() == [2, 3, 4, 5]
    assert scene_recall([2, 3], (4, 6), 12, 3, 2) == 1.0
    assert scene_recall([0, 9], (4, 6), 12, 3, 2) == 0.0
    assert scene_recall([0, 5], (4, 6), 12, 3, 2) == 0.5
    # k = 2 uniform picks from T = 10, 4 of which overlap
    assert abs(chance_recall((4, 6), 12, 3, 2) - 0.4) < 1e-12


def test_oracle_selection_has_full_recall():
    spec = _spec(n_train=0, n_val=0, n_test=200)
    for s in generate_dataset(spec):
        hits = overlapping_segments(s.causal_window, spec.n_frames, 3)
        assert scene_recall(hits[:2], s.causal_window, spec.n_frames, 3, 2) == 1.0


# ---------------------------------------------------------------- training
def test_micro_training_reduces_loss(trained):
    _, report, _ = trained
    train_loss = [r["loss"] for r in report.history if r["split"] == "train"]
    assert len(train_loss) == 5
    assert train_loss[-1] < train_loss[0]


def test_metrics_log_one_record_per_epoch_per_split(trained):
    _, _, out = trained
    recs = [json.loads(x) for x in (out / "metrics.jsonl").read_text().splitlines()]
    assert [(r["epoch"], r["split"]) for r in recs] == [(e, s) for e in range(5)
                                                         for s in ("train", "val")]


def test_metrics_log_is_append_only(open_data, tmp_path):
    header, samples = open_data
    fit(_micro(epochs=2), header, samples, tmp_path)
    first = (tmp_path / "metrics.jsonl").read_text().splitlines()
    fit(_micro(epochs=1), header, samples, tmp_path)
    again = (tmp_path / "metrics.jsonl").read_text().splitlines()
    assert len(first) == 4
    assert again[:4] == first and len(again) == 6


def test_checkpoint_round_trip(trained, open_data):
    model, report, out = trained
    header, samples = open_data
    test = split_samples(samples, "test")
    loaded, ck_header = load_checkpoint(report.checkpoint)
    assert ck_header["extra"]["epoch"] == report.best_epoch
    batch = make_batch(test, "open")
    a = model.predict(batch).logits.data
    b = loaded.predict(batch).logits.data
    assert np.max(np.abs(a - b) / np.maximum(1.0, np.abs(a))) <= 1e-6
    assert evaluate_samples(model, test) == evaluate_samples(loaded, test)


def test_checkpoint_corruption_detected(trained, tmp_path):
    _, report, _ = trained
    blob = bytearray(report.checkpoint.read_bytes())
    bad = tmp_path / "bad.ckpt"
    blob[-3] ^= 0xFF
    bad.write_bytes(bytes(blob))
    with pytest.raises(CheckpointError):
        read_checkpoint(bad)
    bad.write_bytes(bytes(blob[: len(blob) // 2]))
    with pytest.raises(CheckpointError):
        read_checkpoint(bad)
    bad.write_bytes(b"not a checkpoint")
    with pytest.raises(CheckpointError):
        read_checkpoint(bad)


def test_evaluate_from_files(trained, open_data, tmp_path):
    _, report, _ = trained
    header, samples = open_data
    write_dataset(tmp_path / "d.jsonl", header, samples)
    res = evaluate(report.checkpoint, tmp_path / "d.jsonl", "test")
    assert res["n"] == 40 and 0 <= res["accuracy"] <= 1
    with pytest.raises(DatasetError):
        evaluate(report.checkpoint, tmp_path / "d.jsonl", "holdout")


def test_same_seed_same_loss_trace(open_data):
    header, samples = open_data
    _, a = fit(_micro(epochs=2), header, samples)
    _, b = fit(_micro(epochs=2), header, samples)
    _, c = fit(_micro(epochs=2, seed=1), header, samples)
    assert a.loss_trace == b.loss_trace
    assert a.loss_trace != c.loss_trace


def test_mode_mismatch_rejected(open_data):
    header, samples = open_data
    with pytest.raises(DatasetError):
        fit(_micro("mc"), header, samples)


def test_save_load_untrained_model(tmp_path, open_data):
    header, _ = open_data
    model = VCSR(_micro(), dims_from_header(header))
    save_checkpoint(tmp_path / "m.ckpt", model)
    loaded, _ = load_checkpoint(tmp_path / "m.ckpt")
    for (n1, p1), (n2, p2) in zip(model.named_parameters(), loaded.named_parameters()):
        assert n1 == n2
        assert np.allclose(p1.data, p2.data, rtol=1e-6, atol=1e-7)


def test_training_halves_lr_on_plateau(open_data):
    header, samples = open_data
    _, report = fit(_micro(epochs=6, plateau_patience=1, lr=3e-3), header, samples)
    vals = [r["accuracy"] for r in report.history if r["split"] == "val"]
    lrs = [r["lr"] for r in report.history if r["split"] == "train"]
    expected, best, lr = [], -1.0, 3e-3
    for epoch, v in enumerate(vals):
        assert lrs[epoch] == lr
        if v > best:
            best = v
        else:
            lr *= 0.5
            expected.append(epoch)
    assert report.lr_halvings == expected
