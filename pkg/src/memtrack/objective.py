"""Reconstruction losses: Huber photometric regression and quantized-color classification."""
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import torch


@dataclass
class LossValue:
    scalar: torch.Tensor
    per_pixel: torch.Tensor

    def item(self) -> float:
        return float(self.scalar.detach())


def _t(x):
    return x if torch.is_tensor(x) else torch.as_tensor(np.asarray(x))


def huber_loss(recon, target, channel_dim: int = -1) -> LossValue:
    """Per-element 0.5 e^2 for |e| < 1, |e| - 0.5 otherwise.

    Elements are summed over the color channel, then averaged over pixels.
    At |e| = 1 both branches have slope sign(e).
    """
    recon, target = _t(recon), _t(target)
    if recon.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(recon.shape)} vs {tuple(target.shape)}")
    e = recon - target
    a = e.abs()
    z = torch.where(a < 1.0, 0.5 * e * e, a - 0.5)
    per_pixel = z.sum(dim=channel_dim)
    return LossValue(per_pixel.mean(), per_pixel)


class QuantizerNotFitted(RuntimeError):
    pass


class ColorQuantizer:
    """Uniform grid quantizer over selected (normalized) color channels.

    The default is a 4 x 4 grid over Lab's (a, b) plane, K = 16 bins. Colors
    map to the nearest center; ties go to the lowest bin index.
    """

    def __init__(self, bins_per_axis: int = 4, channels: Sequence[int] = (1, 2)):
        self.bins_per_axis = bins_per_axis
        self.channels = tuple(channels)
        self.centers = None

    @property
    def bins(self) -> int:
        return self.bins_per_axis ** len(self.channels)

    def fit(self, lo: float = -1.0, hi: float = 1.0) -> "ColorQuantizer":
        step = (hi - lo) / self.bins_per_axis
        axis = lo + step * (np.arange(self.bins_per_axis) + 0.5)
        grids = np.meshgrid(*([axis] * len(self.channels)), indexing="ij")
        self.centers = np.stack([g.ravel() for g in grids], axis=-1)
        return self

    def _require(self):
        if self.centers is None:
            raise QuantizerNotFitted("quantizer must be fitted before use")

    def quantize(self, colors, channel_dim: int = -1):
        """Bin index per color; ``colors`` carries all channels along ``channel_dim``."""
        self._require()
        colors = _t(colors)
        sel = torch.movedim(colors, channel_dim, -1)[..., list(self.channels)]
        centers = torch.as_tensor(self.centers, dtype=sel.dtype)
        d = ((sel.unsqueeze(-2) - centers) ** 2).sum(-1)
        return d.argmin(dim=-1)

    def one_hot(self, colors, channel_dim: int = -1):
        idx = self.quantize(colors, channel_dim)
        oh = torch.nn.functional.one_hot(idx, self.bins).to(_t(colors).dtype)
        return torch.movedim(oh, -1, channel_dim)


def classification_loss(probs, target_bins, quantizer: ColorQuantizer, class_dim: int = -1) -> LossValue:
    """Cross-entropy of copied bin distributions against target bins (log clamped at 1e-8)."""
    quantizer._require()
    probs, target_bins = _t(probs), _t(target_bins).long()
    if probs.shape[class_dim] != quantizer.bins:
        raise ValueError(f"expected {quantizer.bins} classes, got {probs.shape[class_dim]}")
    p = torch.gather(probs, class_dim, target_bins.unsqueeze(class_dim)).squeeze(class_dim)
    per_pixel = -torch.log(p.clamp_min(1e-8))
    return LossValue(per_pixel.mean(), per_pixel)
