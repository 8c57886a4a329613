"""Detection-quality metrics: square-region IoU, point matching, recall.

Grasp accuracy is scored by intersection-over-union of fixed-size squares
(default side 51) centered on detected and ground-truth points; a point
counts as correct when its IoU exceeds 0.5.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .annotations import AnnotationRecord
from .descriptors import GarmentLabel

DEFAULT_SIDE = 51
IOU_CORRECT = 0.5

LABEL_ORDER = (GarmentLabel.NECK_SHIRT, GarmentLabel.NECK_TSHIRT,
               GarmentLabel.WAIST_PANT, GarmentLabel.NO_DETECTION)

GARMENT_OF_LABEL = {
    GarmentLabel.WAIST_PANT: "Pant",
    GarmentLabel.NECK_SHIRT: "Shirt",
    GarmentLabel.NECK_TSHIRT: "T-Shirt",
}


@dataclass(frozen=True)
class Rect:
    """Axis-aligned square on the pixel grid, identified by center and side.

    Covered pixels are the inclusive integer range starting at
    center - (side-1)//2; odd sides center exactly on the pixel.
    """

    center: Tuple[int, int]
    side: int

    def __post_init__(self):
        if self.side < 1:
            raise ValueError("side must be >= 1")

    def pixel_bounds(self, bounds: Optional[Tuple[int, int]] = None):
        """Inclusive (x0, y0, x1, y1), clipped to a (width, height) if given."""
        cx, cy = self.center
        x0 = int(cx) - (self.side - 1) // 2
        y0 = int(cy) - (self.side - 1) // 2
        x1 = x0 + self.side - 1
        y1 = y0 + self.side - 1
        if bounds is not None:
            w, h = bounds
            x0, x1 = max(x0, 0), min(x1, w - 1)
            y0, y1 = max(y0, 0), min(y1, h - 1)
        return x0, y0, x1, y1

    def area(self, bounds=None) -> int:
        x0, y0, x1, y1 = self.pixel_bounds(bounds)
        if x1 < x0 or y1 < y0:
            return 0
        return (x1 - x0 + 1) * (y1 - y0 + 1)


def iou(a: Rect, b: Rect, bounds: Optional[Tuple[int, int]] = None) -> float:
    """Pixel-area intersection over union; 0 when the union is empty."""
    ax0, ay0, ax1, ay1 = a.pixel_bounds(bounds)
    bx0, by0, bx1, by1 = b.pixel_bounds(bounds)
    iw = min(ax1, bx1) - max(ax0, bx0) + 1
    ih = min(ay1, by1) - max(ay0, by0) + 1
    inter = max(iw, 0) * max(ih, 0)
    union = a.area(bounds) + b.area(bounds) - inter
    if union <= 0:
        return 0.0
    return inter / union


@dataclass
class MatchResult:
    iou_per_truth: List[float]
    best_iou: float
    mean_iou: float
    assignment: List[Optional[int]]  # detected index matched to each truth point


def match_points(detected: Sequence, truth: Sequence, side: int = DEFAULT_SIDE,
                 bounds=None) -> MatchResult:
    """Optimal one-to-one assignment of detected points to truth points.

    With at most two points per side, the assignment maximizing the summed
    IoU is found by enumerating both pairings. Unmatched truth points
    score 0; the mean averages over truth points.
    """
    truth = list(truth)
    detected = list(detected)
    if not truth:
        raise ValueError("at least one truth point required")
    if len(truth) > 2 or len(detected) > 2:
        raise ValueError("at most two points per side")

    t_rects = [Rect(tuple(p), side) for p in truth]
    d_rects = [Rect(tuple(p), side) for p in detected]

    def assignment_candidates():
        if not d_rects:
            yield [None] * len(t_rects)
            return
        if len(d_rects) == 1:
            for slot in range(len(t_rects)):
                a = [None] * len(t_rects)
                a[slot] = 0
                yield a
            return
        if len(t_rects) == 1:
            yield [0]
            yield [1]
            return
        yield [0, 1]
        yield [1, 0]

    best_assign = None
    best_total = -1.0
    for assign in assignment_candidates():
        total = sum(iou(t_rects[k], d_rects[d], bounds)
                    for k, d in enumerate(assign) if d is not None)
        if total > best_total:
            best_total = total
            best_assign = assign

    per_truth = [iou(t_rects[k], d_rects[d], bounds) if d is not None else 0.0
                 for k, d in enumerate(best_assign)]
    return MatchResult(iou_per_truth=per_truth,
                       best_iou=max(per_truth) if per_truth else 0.0,
                       mean_iou=float(np.mean(per_truth)),
                       assignment=best_assign)


@dataclass
class DetectionRecord:
    """Serialized outcome of one detection run, aligned to an annotation."""

    image_id: str
    label: GarmentLabel
    points: List[Tuple[int, int]] = field(default_factory=list)
    degraded: bool = False


@dataclass
class ConfusionMatrix:
    """Counts over truth rows x predicted columns in LABEL_ORDER."""

    counts: np.ndarray = field(default_factory=lambda: np.zeros((4, 4), dtype=int))

    def add(self, truth: GarmentLabel, predicted: GarmentLabel):
        self.counts[LABEL_ORDER.index(truth), LABEL_ORDER.index(predicted)] += 1

    def percentages(self) -> np.ndarray:
        """Row-normalized percentages; empty rows stay all-zero."""
        out = np.zeros((4, 4))
        for r in range(4):
            total = self.counts[r].sum()
            if total:
                out[r] = 100.0 * self.counts[r] / total
        return out


@dataclass
class ClassMetrics:
    images: int = 0
    iou_sum_all_points: float = 0.0
    truth_points: int = 0
    best_iou_sum: float = 0.0
    images_one_correct: int = 0
    images_two_correct: int = 0

    @property
    def mean_iou_all(self) -> float:
        return self.iou_sum_all_points / self.truth_points if self.truth_points else 0.0

    @property
    def mean_iou_best(self) -> float:
        return self.best_iou_sum / self.images if self.images else 0.0

    @property
    def recall_one(self) -> float:
        return 100.0 * self.images_one_correct / self.images if self.images else 0.0

    @property
    def recall_two(self) -> float:
        return 100.0 * self.images_two_correct / self.images if self.images else 0.0


@dataclass
class EvalReport:
    per_class: Dict[str, ClassMetrics]
    confusion: ConfusionMatrix
    diagnostics: List[str]
    side: int = DEFAULT_SIDE


def evaluate(detections: Sequence[DetectionRecord],
             annotations: Sequence[AnnotationRecord],
             side: int = DEFAULT_SIDE) -> EvalReport:
    """Aggregate matched detections into the per-class report.

    The two lists must be aligned one-to-one by image id. A point is
    correct when its IoU exceeds 0.5; one-point recall counts images with
    at least one correct point, two-point recall images where both truth
    points are matched correctly.
    """
    if len(detections) != len(annotations):
        raise ValueError("detection and annotation lists differ in length")
    per_class: Dict[str, ClassMetrics] = {}
    confusion = ConfusionMatrix()
    diagnostics = []

    for det, ann in zip(detections, annotations):
        if det.image_id != ann.image_id:
            raise ValueError(f"id mismatch: {det.image_id!r} vs {ann.image_id!r}")
        cls = GARMENT_OF_LABEL[ann.key_part_label]
        m = per_class.setdefault(cls, ClassMetrics())
        m.images += 1
        confusion.add(ann.key_part_label, det.label)

        match = match_points(det.points, ann.grasp_points, side=side)
        m.iou_sum_all_points += sum(match.iou_per_truth)
        m.truth_points += len(match.iou_per_truth)
        m.best_iou_sum += match.best_iou
        correct = [v > IOU_CORRECT for v in match.iou_per_truth]
        if any(correct):
            m.images_one_correct += 1
        if len(correct) == 2 and all(correct):
            m.images_two_correct += 1
        diagnostics.append(
            f"{ann.image_id} truth={ann.key_part_label.value} "
            f"pred={det.label.value} ious="
            + ",".join(f"{v:.6f}" for v in match.iou_per_truth)
            + (" degraded" if det.degraded else ""))
    return EvalReport(per_class=per_class, confusion=confusion,
                      diagnostics=diagnostics, side=side)


def render_report(report: EvalReport) -> str:
    """Human-readable report text with fixed 6-decimal numbers."""
    lines = []
    lines.append(f"grasp-eval v1 side={report.side}")
    lines.append("")
    lines.append("per-class metrics")
    header = f"{'class':10s} {'images':>6s} {'meanIoU':>10s} {'bestIoU':>10s} " \
             f"{'recall1':>10s} {'recall2':>10s}"
    lines.append(header)
    for cls in sorted(report.per_class):
        m = report.per_class[cls]
        lines.append(f"{cls:10s} {m.images:6d} {m.mean_iou_all:10.6f} "
                     f"{m.mean_iou_best:10.6f} {m.recall_one:10.6f} {m.recall_two:10.6f}")
    lines.append("")
    lines.append("confusion matrix (%, rows = truth)")
    names = [lab.value for lab in LABEL_ORDER]
    lines.append(" " * 12 + " ".join(f"{n:>12s}" for n in names))
    pct = report.confusion.percentages()
    for r, lab in enumerate(LABEL_ORDER):
        if lab == GarmentLabel.NO_DETECTION and report.confusion.counts[r].sum() == 0:
            continue
        lines.append(f"{lab.value:12s}" + " ".join(f"{pct[r, c]:12.6f}" for c in range(4)))
    lines.append("")
    lines.append("per-image diagnostics")
    lines.extend("  " + d for d in report.diagnostics)
    return "\n".join(lines) + "\n"
