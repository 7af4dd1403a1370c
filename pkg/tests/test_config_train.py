import numpy as np
import pytest
import torch

from memtrack.config import RunConfig, load_config, parse_kv
from memtrack.data import CorpusSpec, generate_corpus
from memtrack.encoder import EncoderConfig, build_encoder
from memtrack.train import train, write_loss_csv


def test_lr_halves_at_milestones():
    cfg = RunConfig(phase1_steps=100, lr=1e-3)
    assert cfg.milestone_steps() == [40, 60, 80]
    assert [cfg.lr_at(s) for s in (0, 39, 40, 59, 60, 80, 99)] == [1e-3, 1e-3, 5e-4, 5e-4, 2.5e-4, 1.25e-4, 1.25e-4]


def test_config_validation():
    with pytest.raises(ValueError):
        RunConfig(milestones=(0.6, 0.4))
    with pytest.raises(ValueError):
        RunConfig(milestones=(0.4, 1.2))
    with pytest.raises(ValueError):
        RunConfig(loss="gan")
    with pytest.raises(ValueError):
        RunConfig.from_dict({"bogus": 1})


def test_parse_and_load(tmp_path):
    assert parse_kv("a = 1  # note\n\n# skip\nb=x y") == {"a": "1", "b": "x y"}
    with pytest.raises(ValueError):
        parse_kv("oops")
    p = tmp_path / "run.cfg"
    p.write_text("phase1_steps = 10\nwidths = 8, 16, 32\nmilestones = 0.5 0.75\nimage_size = none\n")
    cfg = load_config(str(p), {"seed": "7", "mode": "soft"})
    assert cfg.phase1_steps == 10 and cfg.widths == (8, 16, 32) and cfg.milestones == (0.5, 0.75)
    assert cfg.image_size is None and cfg.seed == 7 and cfg.mode == "soft"
    assert RunConfig.from_dict(cfg.to_dict()) == cfg


def tiny_corpus(n=4, frames=6):
    return [s.frames for s in generate_corpus(CorpusSpec(num_sequences=n, frames=frames, height=32, width=32,
                                                         min_size=8, max_size=14, seed=1)).values()]


def test_zero_steps_returns_initialization():
    cfg = RunConfig(phase1_steps=0, phase2_steps=0, seed=3)
    result = train(cfg, tiny_corpus(2, 3))
    init = build_encoder(EncoderConfig(seed=3))
    for a, b in zip(result.model.state_dict().values(), init.state_dict().values()):
        assert torch.equal(a, b)
    assert result.losses == []


@pytest.mark.parametrize("loss", ["regression", "classification"])
def test_short_run_is_deterministic(tmp_path, loss):
    cfg = RunConfig(phase1_steps=6, phase2_steps=3, batch_size=2, phase2_batch_size=2, phase2_clip=4,
                    widths=(8, 8, 16), loss=loss, radius=2, seed=5)
    data = tiny_corpus()
    a, b = train(cfg, data), train(cfg, data)
    assert [r.loss for r in a.losses] == [r.loss for r in b.losses]
    assert [r.phase for r in a.losses] == [1] * 6 + [2] * 3
    assert all(np.isfinite(r.loss) for r in a.losses)
    for x, y in zip(a.model.state_dict().values(), b.model.state_dict().values()):
        assert torch.equal(x, y)
    write_loss_csv(a.losses, tmp_path / "loss.csv")
    lines = (tmp_path / "loss.csv").read_text().splitlines()
    assert lines[0] == "phase,step,lr,loss" and len(lines) == 10


def test_phase1_loss_decreases():
    cfg = RunConfig(phase1_steps=150, phase2_steps=0, batch_size=4, widths=(8, 16, 32), radius=3, seed=0)
    losses = [r.loss for r in train(cfg, tiny_corpus(8)).losses]
    assert np.mean(losses[-20:]) < np.mean(losses[:20])

