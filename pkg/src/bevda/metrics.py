"""Map-quality metrics: per-class IoU/mIoU and Chamfer-distance AP.

Chamfer distance resamples both polylines at a fixed arc-length step and
averages symmetric nearest-point distances. AP uses greedy matching in
descending score order (a prediction is a true positive when its Chamfer
distance to the closest unmatched ground truth is within the threshold) and
all-point interpolation of the precision-recall curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractViolation

CHAMFER_THRESHOLDS = (0.5, 1.0, 1.5)


@dataclass(frozen=True)
class Polyline:
    """Ordered 2D points in meters (ego frame) with a score and class id."""

    points: np.ndarray
    score: float = 1.0
    class_id: int = 0

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        object.__setattr__(self, "points", pts)
        if pts.ndim != 2 or pts.shape[0] < 2 or pts.shape[1] != 2:
            raise ContractViolation("a polyline needs at least two 2-D points")
        if not np.all(np.isfinite(pts)):
            raise ContractViolation("polyline coordinates must be finite")
        if not (0.0 <= self.score <= 1.0):
            raise ContractViolation("polyline score must lie in [0, 1]")


def iou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Intersection over union of two binary maps; both empty counts as 1."""
    pred = np.asarray(pred, dtype=bool)
    gt = np.asarray(gt, dtype=bool)
    if pred.shape != gt.shape:
        raise ContractViolation("iou inputs must share a shape")
    union = np.logical_or(pred, gt).sum()
    if union == 0:
        return 1.0
    return float(np.logical_and(pred, gt).sum() / union)


def miou(pred: np.ndarray, gt: np.ndarray) -> float:
    """Mean of per-class IoU over class-leading binary maps."""
    if pred.shape != gt.shape:
        raise ContractViolation("miou inputs must share a shape")
    return float(np.mean([iou(p, g) for p, g in zip(pred, gt)]))


def resample_polyline(points: np.ndarray, step: float) -> np.ndarray:
    """Resample a polyline at a fixed arc-length step, keeping both endpoints."""
    points = np.asarray(points, dtype=np.float64)
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total == 0.0:
        return points[:1]
    stations = np.arange(0.0, total, step)
    if stations[-1] < total:
        stations = np.concatenate([stations, [total]])
    seg_idx = np.clip(np.searchsorted(cum, stations, side="right") - 1, 0, len(seg) - 1)
    seg_len = np.where(seg[seg_idx] > 0, seg[seg_idx], 1.0)
    frac = (stations - cum[seg_idx]) / seg_len
    return points[seg_idx] + frac[:, None] * (points[seg_idx + 1] - points[seg_idx])


def chamfer_distance(a: Polyline, b: Polyline, sample_step: float = 0.1) -> float:
    """Symmetric mean nearest-point distance between two sampled polylines."""
    if sample_step <= 0:
        raise ContractViolation("sample_step must be positive")
    pa = resample_polyline(a.points, sample_step)
    pb = resample_polyline(b.points, sample_step)
    d2 = ((pa[:, None, :] - pb[None, :, :]) ** 2).sum(axis=-1)
    d = np.sqrt(d2)
    return 0.5 * (d.min(axis=1).mean() + d.min(axis=0).mean())


def _pr_auc(tp_flags: np.ndarray, n_gt: int) -> float:
    """Area under the PR curve with the all-point precision envelope."""
    if n_gt == 0:
        return 0.0
    tp_cum = np.cumsum(tp_flags)
    ranks = np.arange(1, len(tp_flags) + 1)
    precision = tp_cum / ranks
    recall = tp_cum / n_gt
    # envelope: precision at recall >= r, integrated over recall increments
    recall = np.concatenate([[0.0], recall])
    precision = np.concatenate([[1.0], precision])
    for i in range(len(precision) - 2, -1, -1):
        precision[i] = max(precision[i], precision[i + 1])
    return float(np.sum((recall[1:] - recall[:-1]) * precision[1:]))


def chamfer_ap(
    preds: list[Polyline],
    gts: list[Polyline],
    threshold: float,
    sample_step: float = 0.1,
) -> float:
    """Average precision of scored polylines against ground truth at one CD threshold."""
    if not gts:
        return 0.0
    if not preds:
        return 0.0
    order = sorted(range(len(preds)), key=lambda i: (-preds[i].score, i))
    matched = [False] * len(gts)
    tp = np.zeros(len(preds))
    for rank, i in enumerate(order):
        best_cd, best_j = np.inf, -1
        for j, gt in enumerate(gts):
            if matched[j]:
                continue
            cd = chamfer_distance(preds[i], gt, sample_step)
            if cd < best_cd:
                best_cd, best_j = cd, j
        if best_j >= 0 and best_cd <= threshold:
            matched[best_j] = True
            tp[rank] = 1.0
    return _pr_auc(tp, len(gts))


@dataclass
class ChamferReport:
    """Per-class AP at each threshold plus the per-class and overall means."""

    per_class: dict[int, dict[float, float]] = field(default_factory=dict)

    def class_ap(self, class_id: int) -> float:
        vals = self.per_class[class_id]
        return float(np.mean([vals[t] for t in sorted(vals)]))

    @property
    def mean_ap(self) -> float:
        if not self.per_class:
            return 0.0
        return float(np.mean([self.class_ap(c) for c in self.per_class]))


def chamfer_map(
    preds: list[Polyline],
    gts: list[Polyline],
    thresholds: tuple[float, ...] = CHAMFER_THRESHOLDS,
    sample_step: float = 0.1,
) -> ChamferReport:
    """AP per class per threshold; classes are taken from the ground truth."""
    report = ChamferReport()
    class_ids = sorted({g.class_id for g in gts})
    for cid in class_ids:
        p_c = [p for p in preds if p.class_id == cid]
        g_c = [g for g in gts if g.class_id == cid]
        report.per_class[cid] = {t: chamfer_ap(p_c, g_c, t, sample_step) for t in thresholds}
    return report
