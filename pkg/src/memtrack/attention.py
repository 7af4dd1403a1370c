"""Differentiable correspondence ops: dilated windows, heatmaps, soft-argmax
localization, bilinear key resampling, joint affinity and copying.

Coordinates are (x, y) in feature cells, x along the width. Window sites are
enumerated row-major (dy outer, dx inner). Out-of-bounds sites are masked in
the localization window; bilinear resampling clamps to the grid border.

The single-query functions mirror the math one pixel at a time and are used
as references; the dense ``restricted_attention``/``memory_attention`` run
whole feature maps for training.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import List, Optional, Sequence

import numpy as np
import torch
import torch.nn.functional as F


class EmptyCandidateError(ValueError):
    pass


@dataclass(frozen=True)
class WindowSpec:
    radius: int = 6
    dilation: int = 1

    def __post_init__(self):
        if self.radius < 0 or self.dilation < 1:
            raise ValueError("radius must be >= 0 and dilation >= 1")

    @property
    def size(self) -> int:
        return (2 * self.radius + 1) ** 2


@dataclass
class Heatmap:
    weights: torch.Tensor
    coords: torch.Tensor


def _t(x, dtype=None):
    t = x if torch.is_tensor(x) else torch.as_tensor(np.asarray(x))
    return t if dtype is None else t.to(dtype)


def window_offsets(radius: int, dilation: int = 1) -> torch.Tensor:
    """(n, 2) integer (dx, dy) offsets, row-major."""
    r = torch.arange(-radius, radius + 1)
    dy, dx = torch.meshgrid(r, r, indexing="ij")
    return torch.stack([dx.reshape(-1), dy.reshape(-1)], dim=1) * dilation


# ---------------------------------------------------------------- single query

def im2col_dilated(fm, center, spec: WindowSpec):
    """Keys at ``center + dilation * (dx, dy)`` for a C x h x w map.

    Returns ``(keys (n, C), mask (n,), coords (n, 2))``; masked sites carry a
    zero key and their coordinates are clamped into the grid.
    """
    fm = _t(fm)
    C, h, w = fm.shape
    sites = window_offsets(spec.radius, spec.dilation) + torch.as_tensor(center).long()
    x, y = sites[:, 0], sites[:, 1]
    mask = (x >= 0) & (x < w) & (y >= 0) & (y < h)
    cx, cy = x.clamp(0, w - 1), y.clamp(0, h - 1)
    keys = fm[:, cy, cx].T * mask[:, None].to(fm.dtype)
    coords = torch.stack([cx, cy], dim=1).to(fm.dtype)
    return keys, mask, coords


def heatmap(query, keys, mask=None, coords=None) -> Heatmap:
    query, keys = _t(query), _t(keys)
    if keys.shape[-1] != query.shape[-1]:
        raise ValueError(f"query dim {query.shape[-1]} != key dim {keys.shape[-1]}")
    logits = keys @ query
    if mask is not None:
        mask = _t(mask).bool()
        if not mask.any():
            raise EmptyCandidateError("every candidate site is masked")
        logits = logits.masked_fill(~mask, float("-inf"))
    elif keys.shape[0] == 0:
        raise EmptyCandidateError("no candidate sites")
    return Heatmap(torch.softmax(logits, dim=0), coords)


def soft_argmax(hm: Heatmap) -> torch.Tensor:
    return (hm.weights[:, None] * _t(hm.coords, hm.weights.dtype)).sum(dim=0)


def bilinear_sample(fm, points) -> torch.Tensor:
    """Sample a C x h x w map at (m, 2) real (x, y) points, clamped to the border -> (m, C)."""
    fm, points = _t(fm), _t(points, _t(fm).dtype)
    C, h, w = fm.shape
    x = points[:, 0].clamp(0, w - 1)
    y = points[:, 1].clamp(0, h - 1)
    grid = torch.stack([2 * x / max(w - 1, 1) - 1, 2 * y / max(h - 1, 1) - 1], dim=-1)
    out = F.grid_sample(fm[None], grid[None, None], mode="bilinear",
                        padding_mode="border", align_corners=True)
    return out[0, :, 0].T


def resample_key(fm, center, radius: int) -> torch.Tensor:
    """(2r+1)^2 keys bilinearly interpolated at unit spacing around real ``center``."""
    center = _t(center, _t(fm).dtype)
    pts = window_offsets(radius).to(center.dtype) + center
    return bilinear_sample(fm, pts)


def fine_affinity(query, candidates) -> torch.Tensor:
    """One softmax over all candidates pooled across memory frames."""
    if isinstance(candidates, (list, tuple)):
        if not candidates:
            raise EmptyCandidateError("no candidate keys")
        candidates = torch.cat([_t(c) for c in candidates], dim=0)
    candidates = _t(candidates)
    if candidates.shape[0] == 0:
        raise EmptyCandidateError("no candidate keys")
    return torch.softmax(candidates @ _t(query), dim=0)


def copy(affinity, values) -> torch.Tensor:
    affinity, values = _t(affinity), _t(values)
    if values.ndim != 2 or values.shape[0] != affinity.shape[0]:
        raise ValueError(f"values {tuple(values.shape)} do not match {affinity.shape[0]} candidates")
    return affinity @ values


def localize_and_resample(query, fm, center, loc: WindowSpec, fine_radius: int):
    """ROI localization in one memory frame: heatmap -> soft-argmax -> resampled keys."""
    keys, mask, coords = im2col_dilated(fm, center, loc)
    P = soft_argmax(heatmap(query, keys, mask, coords))
    return P, resample_key(fm, P, fine_radius)


# ---------------------------------------------------------------- dense maps
#
# Dense ops start from the full query/key similarity of two maps and mask it
# down to each query's window. Because dot products are linear, sampling the
# similarity map bilinearly at a point equals dotting the query with the
# bilinearly resampled key, so the ROI stage never materializes key patches.
# Memory is O((h*w)^2) per image, fine at desk-scale grids; the inference
# kernels in ``kernels`` run in O(window) memory.

@lru_cache(maxsize=64)
def _window_table(h: int, w: int, radius: int, dilation: int):
    """Boolean (hw, hw) site mask and (hw, 2) cell coordinates."""
    ys, xs = torch.meshgrid(torch.arange(h), torch.arange(w), indexing="ij")
    xs, ys = xs.reshape(-1), ys.reshape(-1)
    dx = xs[None, :] - xs[:, None]
    dy = ys[None, :] - ys[:, None]
    lim = radius * dilation
    mask = (dx.abs() <= lim) & (dy.abs() <= lim) & (dx % dilation == 0) & (dy % dilation == 0)
    return mask, torch.stack([xs, ys], dim=1)


def similarity(q, k) -> torch.Tensor:
    """(B, C, h, w) x (B, C, h, w) -> (B, hw_q, hw_k) dot products."""
    return torch.bmm(q.flatten(2).transpose(1, 2), k.flatten(2))


def _masked_softmax(S, radius, dilation, h, w):
    mask, coords = _window_table(h, w, radius, dilation)
    return torch.softmax(S.masked_fill(~mask, float("-inf")), dim=-1), coords


def restricted_attention(q, k, v, radius: int, dilation: int = 1):
    """Copy ``v`` from a window around each query's own location.

    q, k: (B, C, h, w); v: (B, D, h, w). Returns (B, D, h, w).
    """
    B, C, h, w = q.shape
    A, _ = _masked_softmax(similarity(q, k), radius, dilation, h, w)
    out = torch.bmm(v.flatten(2), A.transpose(1, 2))
    return out.view(B, v.shape[1], h, w)


def _localize_from(S, radius, dilation, h, w):
    H, coords = _masked_softmax(S, radius, dilation, h, w)
    return H @ coords.to(S.dtype)  # (B, hw, 2)


def localize(q, k, radius: int, dilation: int) -> torch.Tensor:
    """Soft-argmax ROI centers in ``k`` for every query cell: (B, h, w, 2)."""
    B, C, h, w = q.shape
    return _localize_from(similarity(q, k), radius, dilation, h, w).view(B, h, w, 2)


def _window_grid(P, radius, h, w):
    """Normalized grid_sample coordinates of the clamped unit-spaced window around P (..., 2)."""
    off = window_offsets(radius).to(P.dtype)
    pts = P[..., None, :] + off
    x = pts[..., 0].clamp(0, w - 1)
    y = pts[..., 1].clamp(0, h - 1)
    return torch.stack([2 * x / max(w - 1, 1) - 1, 2 * y / max(h - 1, 1) - 1], dim=-1)


def _sample(fm, grid):
    return F.grid_sample(fm, grid, mode="bilinear", padding_mode="border", align_corners=True)


def bilinear_window(fm, P, radius: int) -> torch.Tensor:
    """Bilinear (2r+1)^2 window around each center P (B, h, w, 2) -> (B, D, n, h, w)."""
    B, D, H, W = fm.shape
    h, w = P.shape[1:3]
    grid = _window_grid(P.reshape(B, h * w, 2), radius, H, W)  # (B, hw, n, 2)
    out = _sample(fm, grid)  # (B, D, hw, n)
    return out.permute(0, 1, 3, 2).reshape(B, D, -1, h, w)


def memory_attention(q, keys: Sequence[torch.Tensor], values: Sequence[torch.Tensor],
                     dilations: Sequence[int], radius: int = 6,
                     fine_radius: Optional[int] = None):
    """Two-stage attention over a memory bank, jointly normalized over all frames.

    For every memory frame: localize an ROI with a dilated window, resample its
    keys and values bilinearly, then one softmax over the pooled candidates.
    Returns (B, D, h, w).
    """
    if not keys:
        raise EmptyCandidateError("empty memory bank")
    fine_radius = radius if fine_radius is None else fine_radius
    B, C, h, w = q.shape
    hw = h * w
    logits: List[torch.Tensor] = []
    vals: List[torch.Tensor] = []
    for k, v, d in zip(keys, values, dilations):
        S = similarity(q, k)
        P = _localize_from(S, radius, d, h, w)
        grid = _window_grid(P, fine_radius, h, w)  # (B, hw, n, 2)
        n = grid.shape[2]
        fine = _sample(S.reshape(B * hw, 1, h, w), grid.reshape(B * hw, n, 1, 2))
        logits.append(fine.view(B, hw, n))
        vals.append(_sample(v, grid))  # (B, D, hw, n)
    A = torch.softmax(torch.cat(logits, dim=-1), dim=-1)
    out = (torch.cat(vals, dim=-1) * A[:, None]).sum(-1)
    return out.view(B, -1, h, w)
