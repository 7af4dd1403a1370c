"""Memory-bank policies: which past frames serve as references for frame t."""
import math
from dataclasses import dataclass, field
from typing import Any, List, Sequence, Tuple


@dataclass(frozen=True)
class BankPolicy:
    long_term: Tuple[int, ...] = (0, 5)
    short_term: Tuple[int, ...] = (5, 3, 1)
    max_frames: int = 5
    name: str = "default"


DEFAULT_POLICY = BankPolicy()
ONLY_SHORT = BankPolicy(long_term=(), short_term=(5, 3, 1), max_frames=3, name="only_short")
ONLY_LONG = BankPolicy(long_term=(0, 5), short_term=(), max_frames=2, name="only_long")


class EmptyBankError(ValueError):
    pass


def sized(n_short: int, m_long: int) -> BankPolicy:
    """Policy with the n nearest odd short-term offsets and m long-term anchors.

    Short-term offsets grow as 1, 3, 5, ...; long-term anchors as 0, 5, 10, ...
    so that ``sized(3, 2)`` is the default policy.
    """
    if n_short < 0 or m_long < 0:
        raise ValueError("memory sizes must be non-negative")
    short = tuple(2 * k + 1 for k in range(n_short))
    long = tuple(5 * k for k in range(m_long))
    return BankPolicy(long, short, max(n_short + m_long, 1), name=f"sized({n_short},{m_long})")


def size_sweep(max_size: int) -> List[BankPolicy]:
    """Alternating growth starting from one short and one long frame."""
    return [sized((k + 1) // 2, k // 2) for k in range(2, max_size + 1)]


def get_policy(name: str) -> BankPolicy:
    if name in ("default", "both"):
        return DEFAULT_POLICY
    if name == "only_short":
        return ONLY_SHORT
    if name == "only_long":
        return ONLY_LONG
    if name.startswith("sized(") and name.endswith(")"):
        n, m = (int(v) for v in name[6:-1].split(","))
        return sized(n, m)
    raise ValueError(f"unknown memory policy {name!r}")


def select_frames(t: int, policy: BankPolicy = DEFAULT_POLICY) -> List[int]:
    if t < 1:
        raise ValueError("target index must be >= 1")
    longs = sorted({i for i in policy.long_term if 0 <= i < t})
    shorts = [t - o for o in sorted(policy.short_term) if t - o >= 0]
    chosen = list(longs)
    for i in shorts:  # nearest first, so truncation drops the oldest short-term frames
        if len(chosen) >= policy.max_frames:
            break
        if i not in chosen:
            chosen.append(i)
    chosen = sorted(chosen[:policy.max_frames])
    if not chosen:
        raise EmptyBankError(f"policy {policy.name!r} selects no frames at t={t}")
    return chosen


def dilation_for(distance: int, period: int = 15) -> int:
    if distance < 1:
        raise ValueError("temporal distance must be >= 1")
    return max(1, math.ceil(distance / period))


@dataclass
class MemoryEntry:
    frame_index: int
    key: Any
    value: Any


@dataclass
class MemoryBank:
    entries: List[MemoryEntry] = field(default_factory=list)

    @property
    def indices(self) -> List[int]:
        return [e.frame_index for e in self.entries]

    def dilations(self, t: int) -> List[int]:
        return [dilation_for(t - e.frame_index) for e in self.entries]

    def __len__(self):
        return len(self.entries)


def build_bank(t: int, policy: BankPolicy, keys: Sequence, values: Sequence) -> MemoryBank:
    """Collect (key, value) pairs for the frames selected at ``t``.

    ``keys`` and ``values`` are indexable by frame index; keys and values of
    one entry must share their trailing h x w dimensions.
    """
    entries = []
    for i in select_frames(t, policy):
        k, v = keys[i], values[i]
        if tuple(k.shape[-2:]) != tuple(v.shape[-2:]):
            raise ValueError(f"frame {i}: key {tuple(k.shape)} and value {tuple(v.shape)} grids differ")
        entries.append(MemoryEntry(i, k, v))
    return MemoryBank(entries)
