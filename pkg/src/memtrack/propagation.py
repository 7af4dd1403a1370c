"""Mask propagation through a video with the memory bank and two-stage attention."""
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np
import torch

from .colorspace import Image, Space, from_uint8
from .encoder import STRIDE, align_sample, encode
from .kernels import memory_attention_frame
from .memory import DEFAULT_POLICY, BankPolicy, EmptyBankError, dilation_for, select_frames


@dataclass
class LabelMap:
    probs: np.ndarray  # (L, h, w)

    @property
    def num_labels(self) -> int:
        return self.probs.shape[0]

    def hard(self) -> np.ndarray:
        return np.argmax(self.probs, axis=0)


@dataclass
class PropagationConfig:
    mode: str = "hard"  # "hard" | "soft"
    policy: BankPolicy = DEFAULT_POLICY
    radius: int = 6
    fine_radius: Optional[int] = None
    colorspace: Space = Space.LAB
    backend: Optional[str] = None

    def __post_init__(self):
        if self.mode not in ("hard", "soft"):
            raise ValueError(f"unknown propagation mode {self.mode!r}")


@dataclass
class PropagationResult:
    label_maps: List[LabelMap] = field(default_factory=list)
    masks: List[np.ndarray] = field(default_factory=list)


def one_hot(labels: np.ndarray, num_labels: int) -> np.ndarray:
    return (np.arange(num_labels)[:, None, None] == labels[None]).astype(np.float64)


def quantize(probs: np.ndarray) -> np.ndarray:
    """Argmax to one-hot; ties go to the lowest label index."""
    return one_hot(np.argmax(probs, axis=0), probs.shape[0])


def upsample_mask(lm: LabelMap, H: int, W: int) -> np.ndarray:
    """Bilinear upsampling of label probabilities followed by argmax.

    Pixel (y, x) reads feature coordinate (y * h / H, x * w / W), so cell
    (i, j) sits on the pixel it was sampled from; beyond the last cell the
    map is clamped.
    """
    L, h, w = lm.probs.shape
    fy = np.clip(np.arange(H) * (h / H), 0, h - 1)
    fx = np.clip(np.arange(W) * (w / W), 0, w - 1)
    y0 = np.floor(fy).astype(int)
    x0 = np.floor(fx).astype(int)
    y1, x1 = np.minimum(y0 + 1, h - 1), np.minimum(x0 + 1, w - 1)
    ay, ax = (fy - y0)[:, None], (fx - x0)[None, :]
    p = lm.probs
    up = ((1 - ay) * (1 - ax) * p[:, y0][:, :, x0] + (1 - ay) * ax * p[:, y0][:, :, x1]
          + ay * (1 - ax) * p[:, y1][:, :, x0] + ay * ax * p[:, y1][:, :, x1])
    return np.argmax(up, axis=0).astype(np.uint8)


def _prepare(frame, space) -> Image:
    if isinstance(frame, Image):
        return frame
    return from_uint8(np.asarray(frame), space)


def propagate_sequence(frames: Sequence, mask0: np.ndarray, model: torch.nn.Module,
                       cfg: PropagationConfig = PropagationConfig(),
                       num_labels: Optional[int] = None) -> PropagationResult:
    """Propagate the frame-0 mask to every later frame.

    ``frames`` are uint8 RGB arrays (converted to ``cfg.colorspace``) or
    normalized Images. Frame 0's memory value stays the ground-truth one-hot
    mask. In hard mode each propagated map is argmax-quantized before it
    enters memory; the returned LabelMaps hold the unquantized probabilities.
    """
    if len(frames) < 2:
        raise ValueError("need at least two frames")
    mask0 = np.asarray(mask0)
    L = int(mask0.max()) + 1 if num_labels is None else num_labels
    if mask0.min() < 0 or mask0.max() >= L:
        raise ValueError(f"mask labels must lie in [0, {L})")
    images = [_prepare(f, cfg.colorspace) for f in frames]
    H, W = images[0].shape[:2]
    if mask0.shape != (H, W):
        raise ValueError(f"mask0 shape {mask0.shape} does not match frames {(H, W)}")

    keys = {}

    def key(i):
        if i not in keys:
            keys[i] = encode(model, images[i]).values
        return keys[i]

    first = one_hot(align_sample(mask0[..., None], STRIDE)[..., 0], L)
    memory = {0: first}
    result = PropagationResult([LabelMap(first)], [mask0.astype(np.uint8)])
    for t in range(1, len(images)):
        idx = select_frames(t, cfg.policy)
        if not idx:
            raise EmptyBankError(f"empty memory bank at t={t}")
        probs = memory_attention_frame(
            key(t), np.stack([key(i) for i in idx]), np.stack([memory[i] for i in idx]),
            [dilation_for(t - i) for i in idx], cfg.radius, cfg.fine_radius, backend=cfg.backend)
        memory[t] = quantize(probs) if cfg.mode == "hard" else probs
        lm = LabelMap(probs)
        result.label_maps.append(lm)
        result.masks.append(upsample_mask(lm, H, W))
    return result
