"""Two-phase self-supervised training by frame reconstruction.

Phase 1 reconstructs a target frame from one reference frame with restricted
attention (dilation 1). Phase 2 fine-tunes with the full memory bank and
two-stage attention. Encoder inputs go through pair-level channel dropout;
values and loss targets stay full-color and are sampled on the feature grid.
"""
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import torch

from .attention import memory_attention, restricted_attention
from .colorspace import from_uint8, sample_dropout
from .config import RunConfig
from .encoder import STRIDE, EncoderConfig, align_sample, build_encoder
from .memory import dilation_for, get_policy, select_frames
from .objective import ColorQuantizer, classification_loss, huber_loss

log = logging.getLogger(__name__)


@dataclass
class LossRecord:
    phase: int
    step: int
    lr: float
    loss: float


@dataclass
class TrainResult:
    model: torch.nn.Module
    encoder_config: EncoderConfig
    losses: List[LossRecord] = field(default_factory=list)


class _Clips:
    """Normalized encoder inputs and aligned full-color targets per sequence."""

    def __init__(self, sequences: Sequence[Sequence[np.ndarray]], space: str, loss_space: str):
        self.inputs, self.targets = [], []
        for frames in sequences:
            if len(frames) < 2:
                raise ValueError("training sequences need at least two frames")
            x = np.stack([from_uint8(f, space).pixels for f in frames]).transpose(0, 3, 1, 2)
            y = x if loss_space == space else np.stack(
                [from_uint8(f, loss_space).pixels for f in frames]).transpose(0, 3, 1, 2)
            self.inputs.append(torch.from_numpy(np.ascontiguousarray(x, dtype=np.float32)))
            self.targets.append(align_sample(torch.from_numpy(np.ascontiguousarray(y, dtype=np.float32)), STRIDE))
        if not self.inputs:
            raise ValueError("no training data")

    def __len__(self):
        return len(self.inputs)


def _drop(x: torch.Tensor, channels: Sequence[Optional[int]]) -> torch.Tensor:
    """x: (B, F, 3, H, W); zero one channel of every frame of clip b."""
    if all(c is None for c in channels):
        return x
    x = x.clone()
    for b, c in enumerate(channels):
        if c is not None:
            x[b, :, c] = 0.0
    return x


class Trainer:
    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.enc_cfg = EncoderConfig(cfg.encoder, cfg.widths, cfg.seed)
        self.model = build_encoder(self.enc_cfg)
        self.loss_space = cfg.loss_space or cfg.colorspace
        self.radius = cfg.radius if cfg.train_radius is None else cfg.train_radius
        self.policy = get_policy(cfg.policy)
        self.quantizer = None
        if cfg.loss == "classification":
            self.quantizer = ColorQuantizer(cfg.quant_bins).fit()

    def _values(self, colors: torch.Tensor) -> torch.Tensor:
        if self.quantizer is None:
            return colors
        return self.quantizer.one_hot(colors, channel_dim=-3)

    def _loss(self, recon: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
        if self.quantizer is None:
            return huber_loss(recon, target, channel_dim=1).scalar
        bins = self.quantizer.quantize(target, channel_dim=1)
        return classification_loss(recon, bins, self.quantizer, class_dim=1).scalar

    def _sample(self, data: _Clips, batch: int, frame_offsets: Sequence[int], t_max_fn):
        """Draw ``batch`` clips; returns stacked inputs (B, F, 3, H, W) and targets (B, F, 3, h, w)."""
        xs, ys = [], []
        for _ in range(batch):
            s = int(self.rng.integers(len(data)))
            T = data.inputs[s].shape[0]
            lo = t_max_fn(T)
            start = int(self.rng.integers(0, T - lo + 1)) if T > lo else 0
            idx = [start + o for o in frame_offsets]
            xs.append(data.inputs[s][idx])
            ys.append(data.targets[s][idx])
        drops = [sample_dropout(self.rng, self.cfg.dropout) for _ in range(batch)]
        return _drop(torch.stack(xs), drops), torch.stack(ys)

    def _encode(self, x: torch.Tensor) -> torch.Tensor:
        B, Fn = x.shape[:2]
        f = self.model(x.flatten(0, 1))
        return f.view(B, Fn, *f.shape[1:])

    def phase1_step(self, data: _Clips) -> torch.Tensor:
        x, y = self._sample(data, self.cfg.batch_size, (0, 1), lambda T: 2)
        f = self._encode(x)
        recon = restricted_attention(f[:, 1], f[:, 0], self._values(y[:, 0]), self.radius, 1)
        return self._loss(recon, y[:, 1])

    def phase2_step(self, data: _Clips) -> torch.Tensor:
        T_min = min(d.shape[0] for d in data.inputs)
        clip = min(self.cfg.phase2_clip, T_min)
        t = int(self.rng.integers(1, clip))
        mem = select_frames(t, self.policy)
        x, y = self._sample(data, self.cfg.phase2_batch_size, mem + [t], lambda T: t + 1)
        f = self._encode(x)
        vals = self._values(y[:, :-1])
        recon = memory_attention(f[:, -1], [f[:, i] for i in range(len(mem))],
                                 [vals[:, i] for i in range(len(mem))],
                                 [dilation_for(t - i) for i in mem], self.radius)
        return self._loss(recon, y[:, -1])

    def fit(self, sequences: Sequence[Sequence[np.ndarray]], callback=None) -> TrainResult:
        cfg = self.cfg
        torch.manual_seed(cfg.seed)
        data = _Clips(sequences, cfg.colorspace, self.loss_space)
        result = TrainResult(self.model, self.enc_cfg)
        opt = torch.optim.Adam(self.model.parameters(), lr=cfg.lr)
        self.model.train()
        phases = [(1, cfg.phase1_steps, self.phase1_step, cfg.lr_at),
                  (2, cfg.phase2_steps, self.phase2_step, lambda s: cfg.phase2_lr)]
        for phase, steps, step_fn, lr_fn in phases:
            for step in range(steps):
                lr = lr_fn(step)
                for g in opt.param_groups:
                    g["lr"] = lr
                loss = step_fn(data)
                opt.zero_grad(set_to_none=True)
                loss.backward()
                opt.step()
                rec = LossRecord(phase, step, lr, float(loss.detach()))
                result.losses.append(rec)
                if step % 100 == 0:
                    log.info("phase %d step %d lr %.2e loss %.5f", phase, step, lr, rec.loss)
                if callback is not None:
                    callback(rec)
            if phase == 1 and callback is not None:
                callback(None)
        self.model.eval()
        return result


def train(cfg: RunConfig, sequences: Sequence[Sequence[np.ndarray]], callback=None) -> TrainResult:
    """Train an encoder on uint8 RGB frame sequences."""
    return Trainer(cfg).fit(sequences, callback)


def write_loss_csv(losses: Sequence[LossRecord], path) -> None:
    with open(path, "w") as fh:
        fh.write("phase,step,lr,loss\n")
        for r in losses:
            fh.write(f"{r.phase},{r.step},{r.lr:.6e},{r.loss:.8f}\n")
