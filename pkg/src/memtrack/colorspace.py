"""Color conversion, [-1, 1] normalization and the channel-dropout bottleneck.

Raw channel ranges used for normalization:

====== ======================================
space  raw ranges
====== ======================================
RGB    R, G, B in [0, 1]
Lab    L in [0, 100]; a, b in [-127, 127]
HSV    H, S, V in [0, 1] (hue as a turn fraction)
====== ======================================

Lab assumes sRGB primaries and a D65 white point. Hue is mapped linearly,
with no circular encoding.
"""
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Tuple

import numpy as np


class Space(str, Enum):
    RGB = "rgb"
    LAB = "lab"
    HSV = "hsv"


RAW_RANGES = {
    Space.RGB: np.array([[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]),
    Space.LAB: np.array([[0.0, 100.0], [-127.0, 127.0], [-127.0, 127.0]]),
    Space.HSV: np.array([[0.0, 1.0], [0.0, 1.0], [0.0, 1.0]]),
}

# sRGB (linear) -> XYZ, D65
_RGB2XYZ = np.array([
    [0.4124564, 0.3575761, 0.1804375],
    [0.2126729, 0.7151522, 0.0721750],
    [0.0193339, 0.1191920, 0.9503041],
])
_XYZ2RGB = np.linalg.inv(_RGB2XYZ)
_WHITE_D65 = np.array([0.95047, 1.0, 1.08883])
_EPS = (6.0 / 29.0) ** 3
_KAPPA = 3.0 * (6.0 / 29.0) ** 2


def as_space(space) -> Space:
    try:
        return Space(space.lower() if isinstance(space, str) else space)
    except ValueError:
        raise ValueError(f"unknown colorspace {space!r}") from None


@dataclass
class Image:
    pixels: np.ndarray
    space: Space = Space.RGB
    normalized: bool = False

    def __post_init__(self):
        self.space = as_space(self.space)
        if self.pixels.ndim != 3 or self.pixels.shape[2] != 3:
            raise ValueError(f"expected an H x W x 3 array, got shape {self.pixels.shape}")

    @property
    def shape(self):
        return self.pixels.shape


def check_grid(H: int, W: int, stride: int = 4):
    if H < stride or W < stride or H % stride or W % stride:
        raise ValueError(f"image size {H}x{W} must be >= {stride} and divisible by {stride}")


def normalize(raw: np.ndarray, space) -> np.ndarray:
    rng = RAW_RANGES[as_space(space)]
    lo, hi = rng[:, 0], rng[:, 1]
    return np.clip(2.0 * (raw - lo) / (hi - lo) - 1.0, -1.0, 1.0)


def denormalize(x: np.ndarray, space) -> np.ndarray:
    rng = RAW_RANGES[as_space(space)]
    lo, hi = rng[:, 0], rng[:, 1]
    return (x + 1.0) * 0.5 * (hi - lo) + lo


def srgb_to_linear(c):
    return np.where(c <= 0.04045, c / 12.92, ((c + 0.055) / 1.055) ** 2.4)


def linear_to_srgb(c):
    c = np.clip(c, 0.0, None)
    return np.where(c <= 0.0031308, 12.92 * c, 1.055 * c ** (1.0 / 2.4) - 0.055)


def rgb_to_lab(rgb: np.ndarray) -> np.ndarray:
    xyz = srgb_to_linear(np.asarray(rgb, dtype=np.float64)) @ _RGB2XYZ.T
    t = xyz / _WHITE_D65
    f = np.where(t > _EPS, np.cbrt(t), t / _KAPPA + 4.0 / 29.0)
    L = 116.0 * f[..., 1] - 16.0
    a = 500.0 * (f[..., 0] - f[..., 1])
    b = 200.0 * (f[..., 1] - f[..., 2])
    return np.stack([L, a, b], axis=-1)


def lab_to_rgb(lab: np.ndarray) -> np.ndarray:
    lab = np.asarray(lab, dtype=np.float64)
    fy = (lab[..., 0] + 16.0) / 116.0
    fx = fy + lab[..., 1] / 500.0
    fz = fy - lab[..., 2] / 200.0
    f = np.stack([fx, fy, fz], axis=-1)
    t = np.where(f > 6.0 / 29.0, f ** 3, _KAPPA * (f - 4.0 / 29.0))
    xyz = t * _WHITE_D65
    return linear_to_srgb(xyz @ _XYZ2RGB.T)


def rgb_to_hsv(rgb: np.ndarray) -> np.ndarray:
    rgb = np.asarray(rgb, dtype=np.float64)
    r, g, b = rgb[..., 0], rgb[..., 1], rgb[..., 2]
    v = rgb.max(axis=-1)
    c = v - rgb.min(axis=-1)
    s = np.where(v > 0, c / np.where(v > 0, v, 1.0), 0.0)
    safe_c = np.where(c > 0, c, 1.0)
    h = np.where(v == r, ((g - b) / safe_c) % 6.0,
                 np.where(v == g, (b - r) / safe_c + 2.0, (r - g) / safe_c + 4.0))
    h = np.where(c > 0, h / 6.0, 0.0)
    return np.stack([h, s, v], axis=-1)


def hsv_to_rgb(hsv: np.ndarray) -> np.ndarray:
    hsv = np.asarray(hsv, dtype=np.float64)
    h, s, v = hsv[..., 0] % 1.0, hsv[..., 1], hsv[..., 2]
    i = np.floor(h * 6.0).astype(int) % 6
    f = h * 6.0 - np.floor(h * 6.0)
    p, q, t = v * (1 - s), v * (1 - f * s), v * (1 - (1 - f) * s)
    table = np.stack([
        np.stack([v, t, p], -1), np.stack([q, v, p], -1), np.stack([p, v, t], -1),
        np.stack([p, q, v], -1), np.stack([t, p, v], -1), np.stack([v, p, q], -1),
    ], axis=0)
    return np.take_along_axis(table, i[None, ..., None].repeat(3, -1), axis=0)[0]


_TO_RGB = {Space.RGB: lambda x: x, Space.LAB: lab_to_rgb, Space.HSV: hsv_to_rgb}
_FROM_RGB = {Space.RGB: lambda x: x, Space.LAB: rgb_to_lab, Space.HSV: rgb_to_hsv}


def to_raw(img: Image) -> np.ndarray:
    return denormalize(img.pixels, img.space) if img.normalized else np.asarray(img.pixels, dtype=np.float64)


def convert(img: Image, target) -> Image:
    """Convert ``img`` to ``target`` space; the result is always normalized."""
    target = as_space(target)
    raw = to_raw(img)
    if not np.all(np.isfinite(raw)):
        raise ValueError("image contains non-finite values")
    if img.space != target:
        raw = _FROM_RGB[target](_TO_RGB[img.space](raw))
    return Image(normalize(raw, target), target, True)


def from_uint8(frame: np.ndarray, space=Space.LAB) -> Image:
    """Decode an 8-bit RGB frame into a normalized image in ``space``."""
    return convert(Image(frame.astype(np.float64) / 255.0, Space.RGB, False), space)


@dataclass
class DropoutSpec:
    probability: float = 0.5
    dropped_channel: Optional[int] = None
    seed: int = 0


def sample_dropout(rng: np.random.Generator, probability: float,
                   forced: Optional[int] = None) -> Optional[int]:
    """Draw one pair-level dropout event; returns the channel index or None."""
    if not 0.0 <= probability <= 1.0:
        raise ValueError("dropout probability must lie in [0, 1]")
    if rng.random() >= probability:
        return None
    if forced is not None:
        if forced not in (0, 1, 2):
            raise ValueError(f"channel index {forced} out of range")
        return forced
    return int(rng.integers(3))


def drop_channel(pixels: np.ndarray, channel: Optional[int]) -> np.ndarray:
    if channel is None:
        return pixels
    out = pixels.copy()
    out[..., channel] = 0.0
    return out


def apply_channel_dropout(img: Image, spec: DropoutSpec,
                          rng: Optional[np.random.Generator] = None) -> Tuple[Image, Optional[int]]:
    """Zero one channel with probability ``spec.probability``.

    The returned index lets the caller drop the same channel from the paired
    frame. ``rng`` overrides the generator seeded from ``spec.seed``.
    """
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    ch = sample_dropout(rng, spec.probability, spec.dropped_channel)
    if ch is None:
        return img, None
    return Image(drop_channel(img.pixels, ch), img.space, img.normalized), ch
