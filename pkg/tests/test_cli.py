import csv
import json

import numpy as np
import pytest

from memtrack.cli import main
from memtrack.data import read_mask, write_sequence


@pytest.fixture(scope="module")
def run(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    spec = root / "synth.cfg"
    spec.write_text("num_sequences = 2\nframes = 5\nheight = 32\nwidth = 32\nmin_size = 8\nmax_size = 14\n")
    cfg = root / "run.cfg"
    cfg.write_text("phase1_steps = 5\nphase2_steps = 2\nbatch_size = 2\nphase2_batch_size = 2\n"
                   "phase2_clip = 4\nwidths = 8, 8, 16\nradius = 2\n")
    assert main(["synth", "--config", str(spec), "--seed", "3", "--out", str(root / "data")]) == 0
    assert main(["train", "--config", str(cfg), "--seed", "1", "--data", str(root / "data"), "--out", str(root / "run")]) == 0
    return root, cfg


def test_train_outputs(run):
    root, _ = run
    names = {p.name for p in (root / "run").iterdir()}
    assert {"checkpoint.bin", "checkpoint_phase1.bin", "loss.csv", "manifest.json"} <= names
    manifest = json.loads((root / "run" / "manifest.json").read_text())
    assert manifest["command"] == "train" and manifest["config"]["phase1_steps"] == 5
    assert manifest["config"]["seed"] == 1
    rows = list(csv.DictReader(open(root / "run" / "loss.csv")))
    assert len(rows) == 7


def test_propagate_and_eval(run, tmp_path):
    root, cfg = run
    ck = str(root / "run" / "checkpoint.bin")
    assert main(["propagate", "--config", str(cfg), "--checkpoint", ck, "--dataset", str(root / "data"),
                 "--out", str(tmp_path / "pred")]) == 0
    seqs = sorted(p.name for p in (root / "data" / "JPEGImages").iterdir())
    assert sorted(p.name for p in (tmp_path / "pred").iterdir() if p.is_dir()) == seqs
    assert main(["eval", "--pred", str(tmp_path / "pred"), "--gt", str(root / "data"), "--out", str(tmp_path / "ev")]) == 0
    summary = json.loads((tmp_path / "ev" / "summary.json").read_text())
    assert "gen_gap" not in summary and 0 <= summary["overall"]["J"] <= 1


def test_eval_perfect_and_split(run, tmp_path):
    root, _ = run
    gt = str(root / "data")
    seqs = sorted(p.name for p in (root / "data" / "Annotations").iterdir())
    split = tmp_path / "split.json"
    split.write_text(json.dumps({seqs[0]: "seen", seqs[1]: "unseen"}))
    assert main(["eval", "--pred", gt, "--gt", gt, "--split", str(split), "--out", str(tmp_path / "ev")]) == 0
    rows = list(csv.DictReader(open(tmp_path / "ev" / "scores.csv")))
    assert all(r["J_mean"] == "1.000000" and r["F_mean"] == "1.000000" for r in rows)
    assert json.loads((tmp_path / "ev" / "summary.json").read_text())["gen_gap"] == 0.0


def test_eval_unmatched_sequences(run, tmp_path, capsys):
    root, _ = run
    write_sequence(tmp_path / "other", "zzz", [np.zeros((8, 8, 3), np.uint8)], [np.zeros((8, 8), np.uint8)])
    assert main(["eval", "--pred", str(tmp_path / "other"), "--gt", str(root / "data"), "--out", str(tmp_path / "ev")]) == 1
    assert "unmatched sequences" in capsys.readouterr().err


def test_propagate_static_sequence_and_missing_mask(run, tmp_path, capsys):
    root, _ = run
    frame = np.random.default_rng(0).integers(0, 256, (32, 32, 3), dtype=np.uint8)
    mask = np.zeros((32, 32), np.uint8)
    mask[7:22, 11:22] = 1
    write_sequence(tmp_path / "static", "s", [frame] * 4, [mask])
    ck = str(root / "run" / "checkpoint.bin")
    args = ["propagate", "--checkpoint", ck, "--frames", str(tmp_path / "static" / "JPEGImages" / "s"),
            "--set", "radius=0", "--out", str(tmp_path / "out")]
    assert main(args + ["--mask0", str(tmp_path / "static" / "Annotations" / "s" / "00000.png")]) == 0
    for i in range(4):
        assert np.array_equal(read_mask(tmp_path / "out" / f"{i:05d}.png"), mask)
    missing = str(tmp_path / "nope.png")
    assert main(args + ["--mask0", missing]) == 1
    err = capsys.readouterr().err.strip()
    assert missing in err and len(err.splitlines()) == 1


def test_bad_inputs_exit_nonzero(tmp_path, capsys):
    assert main(["train", "--data", str(tmp_path / "none"), "--out", str(tmp_path / "o")]) == 1
    bad = tmp_path / "bad.cfg"
    bad.write_text("phase1_steps = 10\nmilestones = 0.8 0.2\n")
    assert main(["train", "--config", str(bad), "--data", str(tmp_path), "--out", str(tmp_path / "o")]) == 1
    assert main(["synth", "--set", "colour=red", "--out", str(tmp_path / "s")]) == 1
    errs = capsys.readouterr().err.strip().splitlines()
    assert len(errs) == 3 and all(e.startswith("memtrack ") for e in errs)
