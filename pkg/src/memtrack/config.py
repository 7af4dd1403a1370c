"""Run configuration: a flat ``key = value`` text file plus command-line overrides."""
from dataclasses import asdict, dataclass, fields
from typing import Optional, Tuple


@dataclass
class RunConfig:
    # phase 1: reference/target pairs, single-frame restricted attention
    phase1_steps: int = 2000
    batch_size: int = 8
    lr: float = 1e-3
    milestones: Tuple[float, ...] = (0.4, 0.6, 0.8)
    # phase 2: full memory bank
    phase2_steps: int = 500
    phase2_batch_size: int = 4
    phase2_lr: float = 2e-5
    phase2_clip: int = 10
    # model / objective
    encoder: str = "toy"
    widths: Tuple[int, ...] = (16, 32, 64)
    colorspace: str = "lab"
    loss_space: Optional[str] = None
    loss: str = "regression"
    quant_bins: int = 4
    dropout: float = 0.5
    # inference
    policy: str = "default"
    mode: str = "hard"
    radius: int = 6
    train_radius: Optional[int] = None
    image_size: Optional[int] = None
    backend: Optional[str] = None
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self):
        for name in ("phase1_steps", "phase2_steps"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.batch_size < 1 or self.phase2_batch_size < 1:
            raise ValueError("batch sizes must be >= 1")
        ms = list(self.milestones)
        if any(not 0 < m < 1 for m in ms) or any(b <= a for a, b in zip(ms, ms[1:])):
            raise ValueError("milestones must be strictly increasing fractions in (0, 1)")
        steps = self.milestone_steps()
        if any(b <= a for a, b in zip(steps, steps[1:])) and self.phase1_steps > 0:
            raise ValueError("milestones collapse onto the same step; increase phase1_steps")
        if self.loss not in ("regression", "classification"):
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.mode not in ("hard", "soft"):
            raise ValueError(f"unknown propagation mode {self.mode!r}")
        if not 0.0 <= self.dropout <= 1.0:
            raise ValueError("dropout must lie in [0, 1]")
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        if self.phase2_clip < 2:
            raise ValueError("phase2_clip must be >= 2")

    def milestone_steps(self):
        return [int(round(m * self.phase1_steps)) for m in self.milestones]

    def lr_at(self, step: int) -> float:
        """Phase-1 learning rate, halved at every milestone reached."""
        return self.lr * 0.5 ** sum(step >= m for m in self.milestone_steps())

    def to_dict(self) -> dict:
        d = asdict(self)
        d["milestones"] = list(self.milestones)
        d["widths"] = list(self.widths)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**{k: coerce(k, v) for k, v in d.items()})


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_INT_TUPLES = {"widths"}
_FLOAT_TUPLES = {"milestones"}
_OPTIONAL_STR = {"loss_space", "backend"}
_OPTIONAL_INT = {"image_size", "train_radius"}


def coerce(key: str, value):
    if not isinstance(value, str):
        return tuple(value) if isinstance(value, list) else value
    v = value.strip()
    if key in _INT_TUPLES:
        return tuple(int(x) for x in v.replace(",", " ").split())
    if key in _FLOAT_TUPLES:
        return tuple(float(x) for x in v.replace(",", " ").split())
    if key in _OPTIONAL_STR:
        return None if v.lower() in ("", "none") else v
    if key in _OPTIONAL_INT:
        return None if v.lower() in ("", "none") else int(v)
    t = _TYPES.get(key)
    if t in (int, "int"):
        return int(v)
    if t in (float, "float"):
        return float(v)
    return v


def parse_kv(text: str) -> dict:
    """Parse ``key = value`` lines; ``#`` starts a comment."""
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {n}: expected key = value, got {line!r}")
        k, v = line.split("=", 1)
        out[k.strip()] = v.strip()
    return out


def load_config(path: Optional[str] = None, overrides: Optional[dict] = None) -> RunConfig:
    d = {}
    if path:
        with open(path) as fh:
            d.update(parse_kv(fh.read()))
    d.update({k: v for k, v in (overrides or {}).items() if v is not None})
    return RunConfig.from_dict(d)
