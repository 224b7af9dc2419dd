import json
import os
from pathlib import Path

import pytest

from gmr.cli import main
from gmr.datagen import n_windows, read_dataset

GEN = "count = 4\nseed = 2\nduration = 2.0\nwindow = 9\nstride = 4\n"
TRAIN = "steps = 6\nbatch = 4\nlr = 1e-3\nlayers = 1\nhidden = 8\nproj_dim = 8\n"


@pytest.fixture
def work(tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    Path("gen.cfg").write_text(GEN)
    Path("train.cfg").write_text(TRAIN)
    return tmp_path


def run(*args):
    return main([str(a) for a in args])


def test_generate_counts_and_determinism(work):
    assert run("generate", "--config", "gen.cfg", "--out", "a.jsonl") == 0
    assert run("generate", "--config", "gen.cfg", "--out", "b.jsonl") == 0
    assert Path("a.jsonl").read_bytes() == Path("b.jsonl").read_bytes()
    assert len(read_dataset("a.jsonl")) == 4 * n_windows(21, 9, 4)
    man = json.loads(Path("a.jsonl.manifest.json").read_text())
    assert man["command"] == "generate" and man["seeds"] == {"seed": 2}
    assert run("generate", "--config", "gen.cfg", "--seed", "3", "--out", "c.jsonl") == 0
    assert Path("c.jsonl").read_bytes() != Path("a.jsonl").read_bytes()


def test_generate_bad_config_exit_2(work):
    Path("bad.cfg").write_text("count = lots\n")
    assert run("generate", "--config", "bad.cfg", "--out", "x.jsonl") == 2
    Path("bad.cfg").write_text("this is not a config\n")
    assert run("generate", "--config", "bad.cfg", "--out", "x.jsonl") == 2
    assert run("generate", "--config", "missing.cfg", "--out", "x.jsonl") == 2


def test_usage_errors_exit_2(work):
    assert run("generate") == 2
    assert run("frobnicate", "--out", "x") == 2
    assert run("report", "--out", "r") == 2
    assert run("train", "missing.jsonl", "--out", "m.ckpt") == 2


def test_train_resume_and_numeric_failure(work):
    run("generate", "--config", "gen.cfg", "--out", "d.jsonl")
    assert run("train", "d.jsonl", "--config", "train.cfg", "--out", "full.ckpt") == 0
    assert run("train", "d.jsonl", "--config", "train.cfg", "--steps", "3", "--out", "half.ckpt") == 0
    assert run("train", "d.jsonl", "--config", "train.cfg", "--resume", "half.ckpt", "--out", "rest.ckpt") == 0
    assert Path("rest.ckpt").read_bytes() == Path("full.ckpt").read_bytes()
    assert Path("full.ckpt.log.csv").read_text().startswith("step,L_total")
    Path("nan.cfg").write_text(TRAIN + "w_trans = inf\n")
    assert run("train", "d.jsonl", "--config", "nan.cfg", "--out", "nan.ckpt") == 3
    assert run("train", "d.jsonl", "--config", "train.cfg", "--seed", "9", "--resume", "half.ckpt",
               "--out", "x.ckpt") == 2


def test_infer_camera_report(work):
    run("generate", "--config", "gen.cfg", "--out", "d.jsonl")
    run("train", "d.jsonl", "--config", "train.cfg", "--out", "m.ckpt")
    assert run("infer", "m.ckpt", "d.jsonl", "--out", "t.jsonl", "--metrics", "m.json") == 0
    lines = Path("t.jsonl").read_text().splitlines()
    first = json.loads(lines[0])
    assert len(first["frames"]) == 9 and len(first["motions"]) == 8
    assert run("camera-sim", "d.jsonl", "m.ckpt", "--kind", "circular", "--out", "c.json") == 0
    assert run("report", "m.json", "c.json", "--out", "rep") == 0
    table = Path("rep.csv").read_text().splitlines()
    assert table[0] == "label,ome_deg,tme_mm,vme_mm,n_sequences"
    assert [r.split(",")[0] for r in table[1:]] == [
        "d", "gmr/camera-off", "baseline/camera-off", "gmr/camera-on", "baseline/camera-on", "mean"]
    assert Path("rep_curves.csv").read_text().startswith("frame,d,")
    assert json.loads(Path("rep.json").read_text())["columns"][0] == "label"


def test_infer_dimension_mismatch_exit_2(work):
    run("generate", "--config", "gen.cfg", "--out", "d.jsonl")
    Path("wide.cfg").write_text(TRAIN + "input_dim = 96\n")
    assert run("train", "d.jsonl", "--config", "wide.cfg", "--steps", "0", "--out", "w.ckpt") == 2
    run("train", "d.jsonl", "--config", "train.cfg", "--steps", "0", "--out", "m.ckpt")
    rows = [json.loads(l) for l in Path("d.jsonl").read_text().splitlines()[:1]]
    for f in rows[0]["frames"]:
        f["quat"] = f["quat"][:-1]
    Path("short.jsonl").write_text(json.dumps(rows[0]) + "\n")
    assert run("infer", "m.ckpt", "short.jsonl", "--out", "t.jsonl") == 2
