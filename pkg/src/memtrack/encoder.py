"""Siamese feature encoders producing keys/queries at 1/4 resolution.

Two variants share one contract (H x W x 3 in, C x H/4 x W/4 out):

* ``toy``: three 3x3 convs, stride 2, 2, 1, widths from ``EncoderConfig.widths``.
* ``paper_resnet18``: 7x7/64 stride-2 stem and four stages of two basic
  residual blocks (64, 128, 256, 256); the first block of the 128 stage
  carries the second stride 2.

Every stride-2 layer uses symmetric zero padding, so output index k looks at
input index 2k; two such layers put feature cell (i, j) at image pixel
(4i, 4j). ``align_sample`` builds loss targets on exactly that grid.
"""
from dataclasses import asdict, dataclass, field
from typing import Tuple

import numpy as np
import torch
import torch.nn as nn
import torch.nn.functional as F

from .colorspace import Image, check_grid

STRIDE = 4
RESNET_WIDTHS = (64, 64, 128, 256, 256)


@dataclass
class EncoderConfig:
    variant: str = "toy"
    widths: Tuple[int, ...] = (16, 32, 64)
    seed: int = 0

    def __post_init__(self):
        self.widths = tuple(int(w) for w in self.widths)
        if self.variant not in ("toy", "paper_resnet18"):
            raise ValueError(f"unknown encoder variant {self.variant!r}")
        if self.variant == "toy" and len(self.widths) != 3:
            raise ValueError("toy encoder takes exactly three widths")
        if self.variant == "paper_resnet18" and len(self.widths) != 5:
            raise ValueError("paper_resnet18 takes five widths (stem + four stages)")

    def to_dict(self):
        d = asdict(self)
        d["widths"] = list(self.widths)
        return d


@dataclass
class FeatureMap:
    values: np.ndarray
    stride: int = STRIDE

    @property
    def channels(self) -> int:
        return self.values.shape[0]


def _conv_bn(cin, cout, k, stride, relu=True):
    layers = [nn.Conv2d(cin, cout, k, stride, k // 2, bias=False), nn.BatchNorm2d(cout)]
    if relu:
        layers.append(nn.ReLU(inplace=True))
    return nn.Sequential(*layers)


class ToyEncoder(nn.Module):
    def __init__(self, widths=(16, 32, 64)):
        super().__init__()
        w0, w1, w2 = widths
        self.net = nn.Sequential(
            _conv_bn(3, w0, 3, 2),
            _conv_bn(w0, w1, 3, 2),
            nn.Conv2d(w1, w2, 3, 1, 1),
        )
        self.out_channels = w2

    def forward(self, x):
        return self.net(x)


class BasicBlock(nn.Module):
    def __init__(self, cin, cout, stride=1):
        super().__init__()
        self.conv1 = nn.Conv2d(cin, cout, 3, stride, 1, bias=False)
        self.bn1 = nn.BatchNorm2d(cout)
        self.conv2 = nn.Conv2d(cout, cout, 3, 1, 1, bias=False)
        self.bn2 = nn.BatchNorm2d(cout)
        self.downsample = None
        if stride != 1 or cin != cout:
            self.downsample = nn.Sequential(nn.Conv2d(cin, cout, 1, stride, bias=False), nn.BatchNorm2d(cout))

    def forward(self, x):
        out = F.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        skip = x if self.downsample is None else self.downsample(x)
        return F.relu(out + skip)


class ResNet18Encoder(nn.Module):
    def __init__(self, widths=RESNET_WIDTHS):
        super().__init__()
        stem, *stages = widths
        self.conv1 = _conv_bn(3, stem, 7, 2)
        blocks, cin = [], stem
        for i, w in enumerate(stages):
            stride = 2 if i == 1 else 1
            blocks += [BasicBlock(cin, w, stride), BasicBlock(w, w)]
            cin = w
        self.layers = nn.Sequential(*blocks)
        self.out_channels = cin

    def forward(self, x):
        return self.layers(self.conv1(x))


def build_encoder(cfg: EncoderConfig) -> nn.Module:
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(cfg.seed)
        if cfg.variant == "toy":
            return ToyEncoder(cfg.widths)
        return ResNet18Encoder(cfg.widths)


def image_to_tensor(img) -> torch.Tensor:
    """H x W x 3 normalized pixels (Image or array) -> 1 x 3 x H x W float32."""
    px = img.pixels if isinstance(img, Image) else np.asarray(img)
    return torch.from_numpy(np.ascontiguousarray(px.transpose(2, 0, 1), dtype=np.float32))[None]


@torch.no_grad()
def encode(model: nn.Module, img) -> FeatureMap:
    """Inference-mode features for one normalized image (running BN statistics)."""
    px = img.pixels if isinstance(img, Image) else np.asarray(img)
    check_grid(px.shape[0], px.shape[1], STRIDE)
    was_training = model.training
    model.eval()
    try:
        out = model(image_to_tensor(px).to(next(model.parameters()).dtype))
    finally:
        model.train(was_training)
    return FeatureMap(out[0].numpy().astype(np.float32))


def align_sample(pixels, stride: int = STRIDE):
    """Sample the image at the strided-convolution centers: cell (i, j) <- pixel (stride*i, stride*j).

    Accepts H x W x C numpy arrays/Images or torch tensors shaped (..., C, H, W).
    """
    if isinstance(pixels, Image):
        pixels = pixels.pixels
    if torch.is_tensor(pixels):
        H, W = pixels.shape[-2:]
        if H % stride or W % stride:
            raise ValueError(f"stride {stride} must divide {H}x{W}")
        return pixels[..., ::stride, ::stride]
    H, W = pixels.shape[:2]
    if H % stride or W % stride:
        raise ValueError(f"stride {stride} must divide {H}x{W}")
    return pixels[::stride, ::stride]


def bilinear_downsample(pixels: np.ndarray, stride: int = STRIDE) -> np.ndarray:
    """Naive area-aligned bilinear downsampling (half-pixel centers), for comparison only."""
    t = torch.from_numpy(np.ascontiguousarray(pixels.transpose(2, 0, 1), dtype=np.float64))[None]
    out = F.interpolate(t, scale_factor=1.0 / stride, mode="bilinear", align_corners=False)
    return out[0].numpy().transpose(1, 2, 0)


def count_parameters(model: nn.Module) -> int:
    return sum(p.numel() for p in model.parameters())
