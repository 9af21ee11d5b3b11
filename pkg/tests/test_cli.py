import json
import subprocess
import sys

import pytest

from vcsr.harness.cli import main

SMALL = ["--set", "data.n_train=40", "--set", "data.n_val=10", "--set", "data.n_test=10",
         "--set", "data.n_frames=10", "--set", "data.d_in=6", "--set", "data.window=2",
         "--set", "data.mode=open"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("data")
    assert main(["gen-data", "--seed", "5", "--out", str(out)] + SMALL) == 0
    return out / "dataset.jsonl"


def test_gen_data_is_byte_reproducible(dataset, tmp_path):
    assert main(["gen-data", "--seed", "5", "--out", str(tmp_path)] + SMALL) == 0
    assert (tmp_path / "dataset.jsonl").read_bytes() == dataset.read_bytes()
    assert main(["gen-data", "--seed", "6", "--out", str(tmp_path / "b")] + SMALL) == 0
    assert (tmp_path / "b" / "dataset.jsonl").read_bytes() != dataset.read_bytes()


def test_unknown_flag_prints_usage(capsys):
    assert main(["train", "--bogus"]) == 1
    assert "usage" in capsys.readouterr().err


def test_missing_command_and_required_flag(capsys):
    assert main([]) == 1
    assert main(["eval", "--checkpoint", "x.ckpt"]) == 1


def test_invalid_configuration(dataset):
    assert main(["train", "--data", str(dataset), "--set", "lr=-1"]) == 1
    assert main(["train", "--data", str(dataset), "--set", "no_such_key=1"]) == 1
    assert main(["gen-data", "--set", "data.rho_train=2"]) == 1


def test_train_eval_cycle(dataset, tmp_path, capsys):
    run = tmp_path / "run"
    argv = ["train", "--data", str(dataset), "--out", str(run), "--profile", "micro",
            "--set", "epochs=2"]
    assert main(argv) == 0
    assert (run / "best.ckpt").exists() and (run / "config.txt").exists()
    assert len((run / "metrics.jsonl").read_text().splitlines()) == 4
    capsys.readouterr()
    assert main(["eval", "--checkpoint", str(run / "best.ckpt"), "--data", str(dataset),
                 "--out", str(run)]) == 0
    res = json.loads(capsys.readouterr().out)
    assert res["n"] == 10
    assert json.loads((run / "eval_test.json").read_text()) == res
    # runtime failures map to exit code 2
    assert main(["eval", "--checkpoint", str(run / "best.ckpt"), "--data", str(dataset),
                 "--split", "holdout"]) == 2
    assert main(["eval", "--checkpoint", str(tmp_path / "missing.ckpt"),
                 "--data", str(dataset)]) == 2


def test_config_file(dataset, tmp_path):
    cfg = tmp_path / "c.txt"
    cfg.write_text("profile=micro\nepochs=1  # short\ndata.n_train=40\n")
    assert main(["train", "--config", str(cfg), "--data", str(dataset),
                 "--out", str(tmp_path / "r")]) == 0
    assert "epochs=1" in (tmp_path / "r" / "config.txt").read_text()


def test_frontdoor_demo(capsys):
    assert main(["frontdoor-demo"]) == 0
    out = capsys.readouterr().out
    tv_naive = float(out.split("TV(naive, interventional)")[1].split("=")[1].split()[0])
    tv_fd = float(out.split("TV(front-door, interventional)")[1].split("=")[1].split()[0])
    assert tv_naive > 0.05 and tv_fd < 1e-9
    assert main(["frontdoor-demo", "--v", "99"]) == 1


def test_ablate_rejects_unknown_variant(dataset, tmp_path):
    assert main(["ablate", "--data", str(dataset), "--variants", "full,bogus",
                 "--out", str(tmp_path)]) == 1


def test_module_entry_point():
    proc = subprocess.run([sys.executable, "-m", "vcsr", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0 and "gen-data" in proc.stdout
