import math

import numpy as np
import pytest
import torch
from hypothesis import given, settings, strategies as st

from memtrack.objective import ColorQuantizer, QuantizerNotFitted, classification_loss, huber_loss

from conftest import finite_difference_check


def test_huber_fixtures():
    t = torch.zeros(2, 2, 3, dtype=torch.float64)
    assert huber_loss(t, t).item() == 0.0
    r = t.clone()
    r[0, 0, 1] = 0.5
    lv = huber_loss(r, t)
    assert lv.per_pixel[0, 0].item() == 0.125
    assert lv.item() == pytest.approx(0.125 / 4)
    r[0, 0, 1] = 2.0
    assert huber_loss(r, t).per_pixel[0, 0].item() == 1.5


def test_huber_channel_dim_and_errors():
    x = torch.randn(4, 5, 3)
    y = torch.randn(4, 5, 3)
    a = huber_loss(x, y).item()
    b = huber_loss(x.permute(2, 0, 1), y.permute(2, 0, 1), channel_dim=0).item()
    assert a == pytest.approx(b, rel=1e-6)
    with pytest.raises(ValueError):
        huber_loss(x, y[:3])


def test_huber_gradient():
    g = torch.Generator().manual_seed(0)
    target = torch.rand(6, 6, 3, generator=g, dtype=torch.float64) * 2 - 1
    recon = target + 0.8 * torch.randn(6, 6, 3, generator=g, dtype=torch.float64)
    recon = torch.where(((recon - target).abs() - 1).abs() < 0.05, target + 0.5, recon)  # stay off the joint
    assert finite_difference_check(lambda r: huber_loss(r, target).scalar, recon, n_coords=40, eps=1e-7) < 1e-5


def test_huber_derivative_at_joint():
    e = torch.tensor([1.0, -1.0], dtype=torch.float64, requires_grad=True)
    huber_loss(e[None], torch.zeros(1, 2, dtype=torch.float64)).scalar.backward()
    assert e.grad.tolist() == [1.0, -1.0]


@settings(max_examples=40, deadline=None)
@given(st.floats(0, 3), st.floats(0, 3))
def test_huber_monotone_in_offset(c1, c2):
    x = torch.from_numpy(np.random.default_rng(0).uniform(-1, 1, (4, 4, 3)))
    lo, hi = sorted((c1, c2))
    for sign in (1, -1):
        assert huber_loss(x, x + sign * lo).item() <= huber_loss(x, x + sign * hi).item()


def test_quantizer_round_trip():
    q = ColorQuantizer().fit()
    assert q.bins == 16
    colors = np.zeros((16, 3))
    colors[:, 1:] = q.centers
    assert q.quantize(colors).tolist() == list(range(16))


def test_quantizer_ties_go_to_lowest_bin():
    q = ColorQuantizer(2, channels=(1,)).fit()  # centers -0.5, 0.5
    assert q.quantize(torch.tensor([[0.0, 0.0, 0.0]])).item() == 0


def test_quantizer_must_be_fitted():
    with pytest.raises(QuantizerNotFitted):
        ColorQuantizer().quantize(np.zeros((1, 3)))
    with pytest.raises(QuantizerNotFitted):
        classification_loss(torch.ones(1, 16) / 16, torch.zeros(1), ColorQuantizer())


def test_one_hot_moves_class_axis():
    q = ColorQuantizer().fit()
    colors = torch.rand(2, 3, 5, 4) * 2 - 1
    oh = q.one_hot(colors, channel_dim=1)
    assert oh.shape == (2, 16, 5, 4)
    assert torch.equal(oh.argmax(1), q.quantize(colors, channel_dim=1))


def test_classification_fixtures():
    q = ColorQuantizer().fit()
    onehot = torch.zeros(3, 16, dtype=torch.float64)
    onehot[torch.arange(3), torch.tensor([0, 5, 15])] = 1
    assert classification_loss(onehot, torch.tensor([0, 5, 15]), q).item() <= 1e-7
    uniform = torch.full((4, 16), 1 / 16, dtype=torch.float64)
    assert classification_loss(uniform, torch.zeros(4), q).item() == pytest.approx(math.log(16), abs=1e-12)
    p = torch.zeros(2, 16, dtype=torch.float64)
    p[0, 3], p[0, 4] = 0.9, 0.1
    p[1, 7], p[1, 8] = 0.1, 0.9
    got = classification_loss(p, torch.tensor([3, 7]), q).item()
    assert got == pytest.approx(-(math.log(0.9) + math.log(0.1)) / 2, abs=1e-12)
    zero = torch.zeros(1, 16, dtype=torch.float64)
    zero[0, 1] = 1
    assert classification_loss(zero, torch.tensor([0]), q).item() == pytest.approx(-math.log(1e-8))
    with pytest.raises(ValueError):
        classification_loss(torch.ones(1, 8) / 8, torch.zeros(1), q)
