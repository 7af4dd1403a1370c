import numpy as np
import pytest

from memtrack.colorspace import Space
from memtrack.data import ShapeSpec, SyntheticSpec, generate
from memtrack.encoder import EncoderConfig, align_sample, build_encoder
from memtrack.memory import EmptyBankError, sized
from memtrack.propagation import LabelMap, PropagationConfig, one_hot, propagate_sequence, quantize, upsample_mask


def static_sequence(T=10):
    # rows 7..21 and cols 11..25 survive the stride-4 round trip exactly
    spec = SyntheticSpec(frames=T, shapes=[ShapeSpec("rectangle", (15, 15), (11, 7)),
                                           ShapeSpec("rectangle", (15, 19), (35, 35))], seed=3)
    return generate(spec)


@pytest.fixture(scope="module")
def model():
    return build_encoder(EncoderConfig(seed=0))


@pytest.mark.parametrize("mode", ["hard", "soft"])
def test_static_sequence_r0_is_identity(model, mode):
    seq = static_sequence()
    res = propagate_sequence(seq.frames, seq.masks[0], model, PropagationConfig(mode=mode, radius=0))
    small = align_sample(seq.masks[0][..., None], 4)[..., 0]
    assert len(res.masks) == 10
    for lm, m in zip(res.label_maps, res.masks):
        assert np.array_equal(lm.hard(), small)
        assert np.array_equal(m, seq.masks[0])


def test_soft_and_hard_agree_until_first_quantization(model):
    seq = generate(SyntheticSpec(frames=5, num_shapes=2, seed=11))
    hard = propagate_sequence(seq.frames, seq.masks[0], model, PropagationConfig(mode="hard", radius=3))
    soft = propagate_sequence(seq.frames, seq.masks[0], model, PropagationConfig(mode="soft", radius=3))
    assert np.array_equal(hard.label_maps[1].probs, soft.label_maps[1].probs)
    assert not np.array_equal(hard.label_maps[4].probs, soft.label_maps[4].probs)
    for res in (hard, soft):
        for lm in res.label_maps:
            assert (lm.probs >= 0).all()
            np.testing.assert_allclose(lm.probs.sum(0), 1.0, atol=1e-5)


def test_determinism(model):
    seq = generate(SyntheticSpec(frames=4, seed=12))
    a = propagate_sequence(seq.frames, seq.masks[0], model)
    b = propagate_sequence(seq.frames, seq.masks[0], model)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.masks, b.masks))


def test_errors(model):
    seq = generate(SyntheticSpec(frames=3, seed=1))
    with pytest.raises(ValueError):
        propagate_sequence(seq.frames[:1], seq.masks[0], model)
    with pytest.raises(ValueError):
        propagate_sequence(seq.frames, seq.masks[0], model, num_labels=1)
    with pytest.raises(ValueError):
        propagate_sequence(seq.frames, seq.masks[0][:32], model)
    with pytest.raises(EmptyBankError):
        propagate_sequence(seq.frames, seq.masks[0], model, PropagationConfig(policy=sized(0, 0)))
    with pytest.raises(ValueError):
        PropagationConfig(mode="fuzzy")


def test_quantize_ties_to_lowest_label():
    p = np.array([[[0.5]], [[0.5]], [[0.0]]])
    assert quantize(p)[:, 0, 0].tolist() == [1.0, 0.0, 0.0]


def test_upsample_constant_and_halves():
    const = LabelMap(one_hot(np.full((3, 4), 2), 3))
    assert (upsample_mask(const, 12, 16) == 2).all()
    two = LabelMap(one_hot(np.array([[0, 1]]), 2))
    row = upsample_mask(two, 1, 8)[0]
    assert row.tolist() == [0, 0, 0, 1, 1, 1, 1, 1]  # midpoint x=2 ties to label 0


def test_upsample_commutes_with_argmax_where_confident():
    rng = np.random.default_rng(0)
    for _ in range(20):
        logits = 4 * rng.normal(size=(3, 8, 8))
        probs = np.exp(logits) / np.exp(logits).sum(0)
        out = upsample_mask(LabelMap(probs), 32, 32)
        srt = np.sort(probs, axis=0)
        confident = srt[-1] - srt[-2] > 0.5
        lab = probs.argmax(0)
        for y in range(32):
            for x in range(32):
                cells = [(a, b) for a in _support(y / 4, 8) for b in _support(x / 4, 8)]
                labels = {lab[c] for c in cells}
                if len(labels) == 1 and all(confident[c] for c in cells):
                    assert out[y, x] == labels.pop()


def _support(f, n):
    """Cells with nonzero bilinear weight at coordinate f."""
    i = int(np.floor(f))
    return [i] if f == i or i + 1 >= n else [i, i + 1]
