"""Detection evaluation: greedy IOU matching, precision/recall/F1, ROC,
confusion matrices and optional non-maximum suppression.

A detection is a true positive iff its class is correct and its IOU with a
still-unmatched ground-truth box exceeds 0.5 (strict). Matching is greedy
in descending confidence, ties broken by box coordinates, so results are
independent of input order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import Annotation, BACKGROUND_ID
from .imaging import BoundingBox, iou

__all__ = [
    "Detection",
    "MatchResult",
    "MetricsReport",
    "RocCurve",
    "match_detections",
    "compute_metrics",
    "roc_curve",
    "confusion",
    "nms",
]


@dataclass(frozen=True)
class Detection:
    box: BoundingBox
    category: int       # end category 0..10, never background
    confidence: float
    image_ref: str = ""

    def __post_init__(self):
        if self.category == BACKGROUND_ID:
            raise ValueError("detections never carry the background label")
        if not 0.0 <= self.confidence <= 1.0:
            raise ValueError(f"confidence {self.confidence} outside [0, 1]")


@dataclass(frozen=True)
class MatchResult:
    true_positives: tuple[Detection, ...]
    false_positives: tuple[Detection, ...]
    false_negatives: tuple[Annotation, ...]
    # index into gts for each TP, aligned with true_positives
    matched_gt: tuple[int, ...] = ()


@dataclass(frozen=True)
class MetricsReport:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int


def _det_order(d: Detection):
    return (-d.confidence, d.box.x_min, d.box.y_min, d.box.x_max, d.box.y_max, d.category)


def match_detections(
    dets: list[Detection], gts: list[Annotation], iou_threshold: float = 0.5
) -> MatchResult:
    """Greedy one-to-one matching in descending confidence order."""
    order = sorted(range(len(dets)), key=lambda i: _det_order(dets[i]))
    taken = [False] * len(gts)
    tps, fps, matched = [], [], []
    for i in order:
        det = dets[i]
        best_j, best_iou = -1, iou_threshold
        for j, gt in enumerate(gts):
            if taken[j] or gt.category != det.category:
                continue
            ov = iou(det.box, gt.box)
            if ov > best_iou:
                best_j, best_iou = j, ov
        if best_j >= 0:
            taken[best_j] = True
            tps.append(det)
            matched.append(best_j)
        else:
            fps.append(det)
    fns = tuple(gt for j, gt in enumerate(gts) if not taken[j])
    return MatchResult(tuple(tps), tuple(fps), fns, tuple(matched))


def compute_metrics(match: MatchResult) -> MetricsReport:
    tp, fp, fn = len(match.true_positives), len(match.false_positives), len(match.false_negatives)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return MetricsReport(precision, recall, f1, tp, fp, fn)


@dataclass(frozen=True)
class RocCurve:
    # (threshold, false positives per image, recall), descending thresholds
    points: tuple[tuple[float, float, float], ...]


def roc_curve(
    dets: list[Detection],
    gts: list[Annotation],
    iou_threshold: float = 0.5,
    image_count: int | None = None,
) -> RocCurve:
    """Recall vs false positives per image, sweeping the confidence cutoff.

    Detections and ground truth may span several images; matching is done
    per image_ref at every distinct confidence threshold.
    """
    if image_count is None:
        image_count = max(1, len({g.image_ref for g in gts} | {d.image_ref for d in dets}))
    by_image_gts: dict[str, list[Annotation]] = {}
    for g in gts:
        by_image_gts.setdefault(g.image_ref, []).append(g)

    thresholds = sorted({d.confidence for d in dets}, reverse=True)
    points = []
    for t in thresholds:
        kept = [d for d in dets if d.confidence >= t]
        by_image: dict[str, list[Detection]] = {}
        for d in kept:
            by_image.setdefault(d.image_ref, []).append(d)
        tp = fp = 0
        for ref in set(by_image) | set(by_image_gts):
            m = match_detections(by_image.get(ref, []), by_image_gts.get(ref, []), iou_threshold)
            tp += len(m.true_positives)
            fp += len(m.false_positives)
        recall = tp / len(gts) if gts else 0.0
        points.append((t, fp / image_count, recall))
    return RocCurve(tuple(points))


def confusion(pairs: list[tuple[int, int]], class_count: int = 12) -> np.ndarray:
    """Counts[true, predicted] over (true, predicted) label pairs."""
    mat = np.zeros((class_count, class_count), dtype=np.int64)
    for true, pred in pairs:
        if not (0 <= true < class_count and 0 <= pred < class_count):
            raise ValueError(f"label pair ({true}, {pred}) out of range")
        mat[true, pred] += 1
    return mat


def nms(dets: list[Detection], iou_threshold: float = 0.3) -> list[Detection]:
    """Greedy same-class suppression by descending confidence. Off by default
    in the pipeline; provided as an evaluation-time post-filter."""
    kept: list[Detection] = []
    for det in sorted(dets, key=_det_order):
        if any(k.category == det.category and iou(k.box, det.box) > iou_threshold for k in kept):
            continue
        kept.append(det)
    return kept
