"""Synthetic moving-shapes videos and frame/mask directory I/O.

Dataset layout on disk (DAVIS style)::

    root/JPEGImages/<seq>/00000.png ...   8-bit RGB frames
    root/Annotations/<seq>/00000.png ...  8-bit single-channel label images
    root/truth.json                       generator motion records (synthetic only)
"""
import json
import os
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from PIL import Image as PILImage
from scipy import ndimage

FRAME_DIR = "JPEGImages"
MASK_DIR = "Annotations"
IMAGE_EXTS = (".png", ".jpg", ".jpeg", ".bmp")


@dataclass
class ShapeSpec:
    kind: str  # "rectangle" | "disk"
    size: Tuple[int, int]  # (height, width); disks use min(size) as diameter
    position: Tuple[int, int]  # (x, y) of the bounding-box corner at frame 0
    velocity: Tuple[int, int] = (0, 0)  # px/frame, (dx, dy)


@dataclass
class SyntheticSpec:
    height: int = 64
    width: int = 64
    frames: int = 10
    num_shapes: int = 2
    kinds: Tuple[str, ...] = ("rectangle", "disk")
    shapes: Optional[List[ShapeSpec]] = None
    min_size: int = 14
    max_size: int = 26
    max_speed: int = 3
    pan: Tuple[int, int] = (0, 0)
    occluder: Optional[Tuple[int, int]] = None  # inclusive frame range
    occluded_shapes: Optional[Tuple[int, ...]] = None
    seed: int = 0


@dataclass
class SyntheticSequence:
    frames: List[np.ndarray]
    masks: List[np.ndarray]
    truth: dict = field(default_factory=dict)


def smooth_noise(rng: np.random.Generator, h: int, w: int, cell: int, channels: int = 3) -> np.ndarray:
    """Low-frequency noise in [0, 1]: random values on a coarse lattice, bilinearly upsampled."""
    ch, cw = max(2, -(-h // cell) + 1), max(2, -(-w // cell) + 1)
    coarse = rng.random((ch, cw, channels))
    return np.clip(ndimage.zoom(coarse, (h / ch, w / cw, 1), order=1), 0.0, 1.0)[:h, :w]


def _footprint(shape: ShapeSpec) -> np.ndarray:
    h, w = shape.size
    if shape.kind == "rectangle":
        return np.ones((h, w), dtype=bool)
    if shape.kind == "disk":
        d = min(h, w)
        yy, xx = np.mgrid[:d, :d]
        c = (d - 1) / 2.0
        return (yy - c) ** 2 + (xx - c) ** 2 <= (d / 2.0) ** 2
    raise ValueError(f"unknown shape kind {shape.kind!r}")


def _shape_texture(rng, h, w):
    base = rng.uniform(0.05, 0.95, size=3)
    return np.clip(0.7 * base + 0.3 * smooth_noise(rng, h, w, 5), 0.0, 1.0)


def _background_texture(rng, h, w):
    """Muted texture: luminance noise at two scales with a weak color cast."""
    lum = 0.7 * smooth_noise(rng, h, w, 8, 1) + 0.3 * smooth_noise(rng, h, w, 4, 1)
    tint = smooth_noise(rng, h, w, 16) - 0.5
    return np.clip(0.15 + 0.7 * lum + 0.25 * tint, 0.0, 1.0)


def _random_shapes(spec: SyntheticSpec, rng) -> List[ShapeSpec]:
    shapes = []
    for _ in range(spec.num_shapes):
        kind = spec.kinds[int(rng.integers(len(spec.kinds)))]
        hi = min(spec.max_size, spec.height, spec.width)
        lo = min(spec.min_size, hi)
        h, w = (int(v) for v in rng.integers(lo, hi + 1, size=2))
        if kind == "disk":
            h = w = min(h, w)
        x = int(rng.integers(0, spec.width - w + 1))
        y = int(rng.integers(0, spec.height - h + 1))
        v = tuple(int(c) for c in rng.integers(-spec.max_speed, spec.max_speed + 1, size=2))
        shapes.append(ShapeSpec(kind, (h, w), (x, y), v))
    return shapes


def _paste(canvas, labels, tex, foot, x, y, label):
    H, W = labels.shape
    fh, fw = foot.shape
    x0, y0 = max(x, 0), max(y, 0)
    x1, y1 = min(x + fw, W), min(y + fh, H)
    if x0 >= x1 or y0 >= y1:
        return
    f = foot[y0 - y:y1 - y, x0 - x:x1 - x]
    canvas[y0:y1, x0:x1][f] = tex[y0 - y:y1 - y, x0 - x:x1 - x][f]
    labels[y0:y1, x0:x1][f] = label


def generate(spec: SyntheticSpec) -> SyntheticSequence:
    """Render a deterministic sequence of textured shapes over a textured background.

    Shape i carries label i + 1. On-screen motion is the shape velocity plus
    the camera ``pan``, which also scrolls the background. The optional
    occluder is a static bar drawn over frames ``occluder[0]..occluder[1]``
    that covers the occluded shapes throughout that range and is labeled
    background.
    """
    rng = np.random.default_rng(spec.seed)
    H, W, T = spec.height, spec.width, spec.frames
    if T < 1:
        raise ValueError("need at least one frame")
    shapes = list(spec.shapes) if spec.shapes is not None else _random_shapes(spec, rng)
    for s in shapes:
        if s.size[0] > H or s.size[1] > W or min(s.size) < 1:
            raise ValueError(f"shape of size {s.size} does not fit a {H}x{W} canvas")
    feet = [_footprint(s) for s in shapes]
    texes = [_shape_texture(rng, *f.shape) for f in feet]
    px, py = spec.pan
    bgW, bgH = W + abs(px) * (T - 1), H + abs(py) * (T - 1)
    background = _background_texture(rng, bgH, bgW)
    bx0, by0 = max(px, 0) * (T - 1), max(py, 0) * (T - 1)

    def pos(s, t):
        return (s.position[0] + (s.velocity[0] + px) * t, s.position[1] + (s.velocity[1] + py) * t)

    occ_rect = None
    if spec.occluder is not None:
        a, b = spec.occluder
        if not 0 <= a <= b < T:
            raise ValueError(f"occluder range {spec.occluder} outside 0..{T - 1}")
        hidden = spec.occluded_shapes if spec.occluded_shapes is not None else range(len(shapes))
        xs0, ys0, xs1, ys1 = W, H, 0, 0
        for i in hidden:
            fh, fw = feet[i].shape
            for t in range(a, b + 1):
                x, y = pos(shapes[i], t)
                xs0, ys0 = min(xs0, x), min(ys0, y)
                xs1, ys1 = max(xs1, x + fw), max(ys1, y + fh)
        occ_rect = (max(xs0 - 2, 0), max(ys0 - 2, 0), min(xs1 + 2, W), min(ys1 + 2, H))
        occ_tex = np.clip(0.35 + 0.3 * smooth_noise(rng, H, W, 3, 1).repeat(3, axis=2), 0, 1)

    frames, masks = [], []
    truth = {"positions": [], "visible": [], "velocity": [list(s.velocity) for s in shapes],
             "pan": [px, py], "kinds": [s.kind for s in shapes], "sizes": [list(s.size) for s in shapes]}
    for t in range(T):
        bx, by = bx0 - px * t, by0 - py * t
        canvas = background[by:by + H, bx:bx + W].copy()
        labels = np.zeros((H, W), dtype=np.uint8)
        for i, (s, f, tex) in enumerate(zip(shapes, feet, texes)):
            x, y = pos(s, t)
            _paste(canvas, labels, tex, f, x, y, i + 1)
        if occ_rect is not None and spec.occluder[0] <= t <= spec.occluder[1]:
            x0, y0, x1, y1 = occ_rect
            canvas[y0:y1, x0:x1] = occ_tex[y0:y1, x0:x1]
            labels[y0:y1, x0:x1] = 0
        frames.append(np.round(canvas * 255.0).astype(np.uint8))
        masks.append(labels)
        truth["positions"].append([list(pos(s, t)) for s in shapes])
        truth["visible"].append([bool((labels == i + 1).any()) for i in range(len(shapes))])
    if occ_rect is not None:
        truth["occluder"] = {"rect": list(occ_rect), "frames": list(spec.occluder)}
    return SyntheticSequence(frames, masks, truth)


@dataclass
class CorpusSpec:
    """A seeded collection of random sequences (what ``synth`` writes)."""
    num_sequences: int = 48
    height: int = 64
    width: int = 64
    frames: int = 12
    min_shapes: int = 1
    max_shapes: int = 3
    min_size: int = 14
    max_size: int = 26
    max_speed: int = 3
    pan_fraction: float = 0.25
    max_pan: int = 4
    occluder_fraction: float = 0.0
    seed: int = 0
    prefix: str = "seq"


def corpus_specs(cs: CorpusSpec) -> List[Tuple[str, SyntheticSpec]]:
    rng = np.random.default_rng(cs.seed)
    out = []
    for i in range(cs.num_sequences):
        pan = (0, 0)
        if rng.random() < cs.pan_fraction:
            pan = tuple(int(v) for v in rng.integers(-cs.max_pan, cs.max_pan + 1, size=2))
        occ = None
        if rng.random() < cs.occluder_fraction and cs.frames >= 6:
            a = int(rng.integers(1, cs.frames // 2))
            occ = (a, min(cs.frames - 2, a + int(rng.integers(2, 6))))
        spec = SyntheticSpec(height=cs.height, width=cs.width, frames=cs.frames,
                             num_shapes=int(rng.integers(cs.min_shapes, cs.max_shapes + 1)),
                             min_size=cs.min_size, max_size=cs.max_size, max_speed=cs.max_speed, pan=pan, occluder=occ,
                             seed=int(rng.integers(2 ** 31)))
        out.append((f"{cs.prefix}{i:04d}", spec))
    return out


def generate_corpus(cs: CorpusSpec) -> Dict[str, SyntheticSequence]:
    return {name: generate(spec) for name, spec in corpus_specs(cs)}


# ---------------------------------------------------------------- disk I/O

def frame_name(i: int) -> str:
    return f"{i:05d}.png"


def write_sequence(root, name: str, frames: Sequence[np.ndarray], masks: Optional[Sequence[np.ndarray]] = None):
    fdir = os.path.join(root, FRAME_DIR, name)
    os.makedirs(fdir, exist_ok=True)
    for i, f in enumerate(frames):
        PILImage.fromarray(f).save(os.path.join(fdir, frame_name(i)))
    if masks is not None:
        write_masks(os.path.join(root, MASK_DIR, name), masks, [frame_name(i) for i in range(len(masks))])


def write_masks(directory, masks: Sequence[np.ndarray], names: Sequence[str]):
    os.makedirs(directory, exist_ok=True)
    for m, n in zip(masks, names):
        if m.max(initial=0) > 255 or m.min(initial=0) < 0:
            raise ValueError("labels must fit in 8 bits")
        PILImage.fromarray(m.astype(np.uint8), mode="L").save(os.path.join(directory, os.path.splitext(n)[0] + ".png"))


def write_corpus(root, corpus: Dict[str, SyntheticSequence]):
    for name, seq in corpus.items():
        write_sequence(root, name, seq.frames, seq.masks)
    with open(os.path.join(root, "truth.json"), "w") as fh:
        json.dump({n: s.truth for n, s in corpus.items()}, fh, sort_keys=True)
        fh.write("\n")


def list_frames(directory) -> List[str]:
    if not os.path.isdir(directory):
        raise FileNotFoundError(f"frame directory not found: {directory}")
    names = sorted(n for n in os.listdir(directory) if n.lower().endswith(IMAGE_EXTS))
    if not names:
        raise FileNotFoundError(f"no image files in {directory}")
    return names


def read_mask(path, size: Optional[int] = None) -> np.ndarray:
    if not os.path.isfile(path):
        raise FileNotFoundError(f"mask not found: {path}")
    im = PILImage.open(path)
    if im.mode not in ("L", "P"):
        im = im.convert("L")
    if size is not None and im.size != (size, size):
        im = im.resize((size, size), PILImage.NEAREST)
    return np.asarray(im, dtype=np.uint8).copy()


def load_sequence(frame_dir, mask_dir=None, size: Optional[int] = 256):
    """Read lexicographically ordered frames (and parallel masks), resized to ``size`` x ``size``.

    ``size=None`` keeps the native resolution. Returns ``(names, frames, masks)``
    with ``masks`` None when no mask directory is given.
    """
    names = list_frames(frame_dir)
    frames, shape = [], None
    for n in names:
        im = PILImage.open(os.path.join(frame_dir, n)).convert("RGB")
        if shape is None:
            shape = im.size
        elif im.size != shape:
            raise ValueError(f"{n}: size {im.size} differs from first frame {shape}")
        if size is not None and im.size != (size, size):
            im = im.resize((size, size), PILImage.BILINEAR)
        frames.append(np.asarray(im, dtype=np.uint8).copy())
    masks = None
    if mask_dir is not None:
        masks = []
        for n in names:
            p = os.path.join(mask_dir, os.path.splitext(n)[0] + ".png")
            if not os.path.isfile(p):
                raise FileNotFoundError(f"missing mask for frame {n}: {p}")
            m = read_mask(p)
            if m.shape[::-1] != shape:
                raise ValueError(f"mask {p} has size {m.shape[::-1]}, frames are {shape}")
            if size is not None and m.shape != (size, size):
                m = np.asarray(PILImage.fromarray(m).resize((size, size), PILImage.NEAREST))
            masks.append(m)
    return names, frames, masks


def list_sequences(root) -> List[str]:
    d = os.path.join(root, FRAME_DIR)
    if not os.path.isdir(d):
        raise FileNotFoundError(f"no {FRAME_DIR}/ directory under {root}")
    return sorted(n for n in os.listdir(d) if os.path.isdir(os.path.join(d, n)))


def load_dataset(root, size: Optional[int] = None, with_masks: bool = True):
    """{name: (frames, masks)} for every sequence under ``root``."""
    out = {}
    for name in list_sequences(root):
        mdir = os.path.join(root, MASK_DIR, name) if with_masks else None
        _, frames, masks = load_sequence(os.path.join(root, FRAME_DIR, name), mdir, size)
        out[name] = (frames, masks)
    return out


def spec_to_dict(spec) -> dict:
    return asdict(spec)
