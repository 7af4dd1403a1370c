"""Region similarity (J), contour accuracy (F) and the seen/unseen generalization gap."""
import csv
import json
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np
from scipy import ndimage


def _check_shapes(pred, gt):
    if pred.shape != gt.shape:
        raise ValueError(f"shape mismatch: {pred.shape} vs {gt.shape}")


def region_similarity(pred: np.ndarray, gt: np.ndarray, obj_id: int = 1) -> float:
    _check_shapes(pred, gt)
    p = pred == obj_id
    g = gt == obj_id
    union = np.logical_or(p, g).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(p, g).sum() / union)


def boundary(mask: np.ndarray) -> np.ndarray:
    """Object pixels with at least one 4-neighbour outside the object (image border counts as outside)."""
    mask = mask.astype(bool)
    padded = np.pad(mask, 1, constant_values=False)
    interior = (padded[:-2, 1:-1] & padded[2:, 1:-1] & padded[1:-1, :-2] & padded[1:-1, 2:])
    return mask & ~interior


def default_tolerance(shape) -> int:
    return max(1, int(round(0.008 * float(np.hypot(*shape[:2])))))


def _distance_to(b: np.ndarray) -> np.ndarray:
    if not b.any():
        return np.full(b.shape, np.inf)
    return ndimage.distance_transform_edt(~b)


def contour_accuracy(pred: np.ndarray, gt: np.ndarray, obj_id: int = 1,
                     tolerance_px: Optional[float] = None) -> float:
    _check_shapes(pred, gt)
    if tolerance_px is None:
        tolerance_px = default_tolerance(gt.shape)
    pb = boundary(pred == obj_id)
    gb = boundary(gt == obj_id)
    if not pb.any() and not gb.any():
        return 1.0
    if not pb.any() or not gb.any():
        return 0.0
    precision = float(np.mean(_distance_to(gb)[pb] <= tolerance_px))
    recall = float(np.mean(_distance_to(pb)[gb] <= tolerance_px))
    if precision + recall == 0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def generalization_gap(j_seen: float, f_seen: float, j_unseen: float, f_unseen: float) -> float:
    vals = np.array([j_seen, f_seen, j_unseen, f_unseen], dtype=np.float64)
    if np.any(vals < 0) or np.any(vals > 100):
        raise ValueError("scores must lie in [0, 1] or [0, 100]")
    if np.any(vals > 1) and np.any((vals > 0) & (vals < 1)):
        raise ValueError("scores mix the [0, 1] and [0, 100] scales")
    return ((j_seen - j_unseen) + (f_seen - f_unseen)) / 2.0


@dataclass
class SequenceScore:
    sequence: str
    obj_id: int
    J: List[float] = field(default_factory=list)
    F: List[float] = field(default_factory=list)

    @property
    def J_mean(self) -> float:
        return float(np.mean(self.J)) if self.J else float("nan")

    @property
    def F_mean(self) -> float:
        return float(np.mean(self.F)) if self.F else float("nan")


def score_sequence(name: str, preds: Sequence[np.ndarray], gts: Sequence[np.ndarray],
                   obj_ids: Optional[Sequence[int]] = None,
                   tolerance_px: Optional[float] = None) -> List[SequenceScore]:
    """Per-object J/F over annotated frames, skipping frame 0 (the given mask)."""
    if len(preds) != len(gts):
        raise ValueError(f"{name}: {len(preds)} predicted frames vs {len(gts)} annotated")
    if obj_ids is None:
        obj_ids = [int(i) for i in np.unique(gts[0]) if i != 0]
    scores = [SequenceScore(name, i) for i in obj_ids]
    for p, g in zip(preds[1:], gts[1:]):
        for s in scores:
            s.J.append(region_similarity(p, g, s.obj_id))
            s.F.append(contour_accuracy(p, g, s.obj_id, tolerance_px))
    return scores


def aggregate(scores: Sequence[SequenceScore]) -> Dict[str, float]:
    """Objects are averaged within a sequence first, then sequences overall."""
    by_seq: Dict[str, List[SequenceScore]] = {}
    for s in scores:
        by_seq.setdefault(s.sequence, []).append(s)
    if not by_seq:
        return {"J": float("nan"), "F": float("nan"), "JF": float("nan"), "sequences": 0}
    j = float(np.mean([np.mean([s.J_mean for s in v]) for v in by_seq.values()]))
    f = float(np.mean([np.mean([s.F_mean for s in v]) for v in by_seq.values()]))
    return {"J": j, "F": f, "JF": (j + f) / 2.0, "sequences": len(by_seq)}


def split_report(scores: Sequence[SequenceScore], split: Dict[str, str]) -> Dict[str, float]:
    seen = [s for s in scores if split.get(s.sequence) == "seen"]
    unseen = [s for s in scores if split.get(s.sequence) == "unseen"]
    a, b = aggregate(seen), aggregate(unseen)
    return {
        "J_seen": a["J"], "F_seen": a["F"], "J_unseen": b["J"], "F_unseen": b["F"],
        "gen_gap": generalization_gap(a["J"], a["F"], b["J"], b["F"]),
    }


def write_scores_csv(scores: Sequence[SequenceScore], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sequence", "object", "J_mean", "F_mean"])
        for s in sorted(scores, key=lambda s: (s.sequence, s.obj_id)):
            w.writerow([s.sequence, s.obj_id, f"{s.J_mean:.6f}", f"{s.F_mean:.6f}"])


def write_summary_json(scores: Sequence[SequenceScore], path, split: Optional[Dict[str, str]] = None) -> dict:
    summary = {"overall": aggregate(scores)}
    if split is not None:
        summary["split"] = split_report(scores, split)
        summary["gen_gap"] = summary["split"]["gen_gap"]
    with open(path, "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return summary
