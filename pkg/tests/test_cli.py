import json
import subprocess
import sys

import numpy as np
import pytest
from PIL import Image

from arnet import cli
from arnet import tensor as T
from arnet.checkpoint import load
from arnet.data import read_idx_dir

TINY = ["--width", "0.0625", "--epochs", "2", "--batch-size", "8", "--lr", "0.256",
        "--erasing", "rot90"]


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("synth")
    assert cli.main(["synth", "--out", str(root), "--n-per-class", "12", "--n-test", "6"]) == 0
    return root


@pytest.fixture(scope="module")
def trained(dataset, tmp_path_factory):
    out = tmp_path_factory.mktemp("ck") / "a.arnk"
    assert cli.main(["train", "--data", str(dataset), "--class-id", "0", "--out", str(out)] + TINY) == 0
    return out


def test_synth_layout(dataset):
    tr, te = read_idx_dir(dataset, "train"), read_idx_dir(dataset, "test")
    assert tr.images.shape == (36, 1, 16, 16) and len(te) == 18


def test_train_writes_report_and_is_deterministic(dataset, trained, tmp_path):
    report = json.loads((trained.parent / "a.arnk.report.json").read_text())
    assert report["epochs_completed"] == 2 and len(report["epoch_losses"]) == 2
    again = tmp_path / "b.arnk"
    assert cli.main(["train", "--data", str(dataset), "--class-id", "0", "--out", str(again)] + TINY) == 0
    assert again.read_bytes() == trained.read_bytes()
    ck = load(trained)
    assert ck.meta["run"]["erasing"] == ["rot90"] and ck.meta["preprocess"]["size"] == 16


def test_config_file_and_overrides(dataset, tmp_path):
    cfg = tmp_path / "run.json"
    cfg.write_text(json.dumps({"data": str(dataset), "class_id": 1, "width": 0.0625, "epochs": 1,
                               "erasing": [], "batch_size": 8}))
    out = tmp_path / "c.arnk"
    assert cli.main(["train", "--config", str(cfg), "--out", str(out), "--seed", "3"]) == 0
    ck = load(out)
    assert ck.erasing == [] and ck.meta["seed"] == 3 and ck.meta["run"]["class_id"] == 1


def test_config_errors(tmp_path, capsys):
    assert cli.main(["train", "--data", str(tmp_path / "missing"), "--class-id", "0",
                     "--out", str(tmp_path / "x")]) == 2
    assert "'data'" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text('{"data": "x", "colour": 1}')
    assert cli.main(["train", "--config", str(bad)]) == 2
    assert "colour" in capsys.readouterr().err
    assert cli.main(["train", "--out", str(tmp_path / "x"), "--class-id", "0"]) == 2
    assert cli.main(["train", "--config", str(tmp_path / "nope.json")]) == 2


def test_score_training_set_mean_is_one(dataset, trained, tmp_path):
    out, csv_out = tmp_path / "s.jsonl", tmp_path / "s.csv"
    assert cli.main(["score", "--checkpoint", str(trained), "--data", str(dataset), "--split", "train",
                     "--out", str(out), "--csv", str(csv_out)]) == 0
    rows = [json.loads(line) for line in out.read_text().splitlines()]
    labels = read_idx_dir(dataset, "train").labels
    normal = [r["score"] for r, lbl in zip(rows, labels) if lbl == 0]
    assert abs(np.mean(normal) - 1) < 1e-4
    assert all(len(r["errors"]) == 4 for r in rows)
    lines = csv_out.read_text().splitlines()
    assert lines[0].startswith("id,score,error_0") and len(lines) == len(rows) + 1


def test_score_empty_and_files(trained, tmp_path, capsys):
    assert cli.main(["score", "--checkpoint", str(trained)]) == 0
    assert capsys.readouterr().out == ""
    good = tmp_path / "g.png"
    Image.fromarray(np.tile(np.arange(16, dtype=np.uint8) * 16, (16, 1)), "L").save(good)
    wrong = tmp_path / "w.png"
    Image.fromarray(np.zeros((20, 20), np.uint8), "L").save(wrong)
    assert cli.main(["score", "--checkpoint", str(trained), str(good), str(good), str(wrong)]) == 0
    rows = [json.loads(line) for line in capsys.readouterr().out.splitlines()]
    assert rows[0]["score"] == rows[1]["score"]
    assert "error" in rows[2]
    assert cli.main(["score", "--strict", "--checkpoint", str(trained), str(wrong)]) == 1


def test_score_bad_checkpoint(tmp_path):
    bad = tmp_path / "bad.arnk"
    bad.write_bytes(b"ARNK\x01")
    assert cli.main(["score", "--checkpoint", str(bad)]) == 1


def test_eval_rows(dataset, tmp_path, capsys):
    out = tmp_path / "ev"
    assert cli.main(["eval", "--data", str(dataset), "--classes", "0,1", "--out", str(out)] + TINY) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert sorted(summary["per_class"]) == ["0", "1"] and "sd" in summary
    assert (out / "summary.csv").read_text().splitlines()[-2].startswith("avg")
    assert json.loads((out / "class_1.json").read_text())["seed"] == 1
    one = tmp_path / "ev1"
    assert cli.main(["eval", "--data", str(dataset), "--classes", "1", "--out", str(one)] + TINY) == 0
    assert list(json.loads((one / "summary.json").read_text())["per_class"]) == ["1"]
    assert cli.main(["eval", "--data", str(dataset), "--classes", "7", "--out", str(one)] + TINY) == 2


def test_gradcheck_command(tmp_path, capsys, monkeypatch):
    out = tmp_path / "gc.json"
    assert cli.main(["gradcheck", "--instances", "3", "--out", str(out)]) == 0
    table = capsys.readouterr().out.splitlines()
    assert table[0].split("\t")[0] == "op" and all(line.endswith("PASS") for line in table[1:])
    assert {r["op"] for r in json.loads(out.read_text())} >= {"conv3x3", "arnet"}
    orig = T.conv3x3_backward
    monkeypatch.setattr(T, "conv3x3_backward", lambda d, c: tuple(-g for g in orig(d, c)))
    assert cli.main(["gradcheck", "--instances", "3"]) == 1
    failed = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines() if line.endswith("FAIL")]
    assert "conv3x3" in failed


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "arnet", "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "gradcheck" in out.stdout
    bad = subprocess.run([sys.executable, "-m", "arnet", "train", "--bogus"], capture_output=True)
    assert bad.returncode == 2
