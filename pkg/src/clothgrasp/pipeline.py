"""End-to-end grasp-point detection.

Recognition: entropy peaks seed snakes; each snake's region is cropped,
voxel-downsampled, described (VFH), and classified by k-NN; per label the
best detection survives. Grasp selection: peaks of the multiscale ridge
map are filtered against the detected key-part mask and paired, with the
pairing rule dispatched on the detected class (neck: the pair whose line
passes closest to the mask center among candidates in the dilated ring;
waist: the pair closest to the mask's two extreme points among candidates
inside the mask).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .contours import Contour, Mask, SnakeParams, contour_to_mask, dilate_mask, \
    evolve_snake, extreme_points, mask_center
from .descriptors import Classification, DegenerateRegionError, GarmentLabel, \
    KnnModel, compute_vfh, knn_classify
from .geometry import CameraIntrinsics, DepthImage, PointCloud, depth_to_cloud, \
    estimate_normals, voxel_downsample
from .wrinkles import EntropyMap, PeakList, VesselnessParams, entropy_filter, \
    find_local_maxima, multiscale_vesselness


class PipelineError(RuntimeError):
    pass


class NoKeyPartError(PipelineError):
    """No garment key part could be recognized in the image."""


class NoCandidatesError(PipelineError):
    """No grasp candidates survived filtering against the key-part mask."""


@dataclass
class PipelineConfig:
    """Tunables for the full detection chain; defaults follow the package's
    reference configuration for structured-light depth images."""

    intrinsics: Optional[CameraIntrinsics] = None  # None: derived from image size
    normal_radius: float = 0.02
    entropy_window: int = 21
    entropy_peak_radius: float = 11.0
    entropy_peak_percentile: float = 60.0
    vessel_params: VesselnessParams = field(default_factory=VesselnessParams)
    vessel_peak_radius: float = 11.0
    vessel_peak_percentile: float = 60.0
    snake_params: SnakeParams = field(default_factory=SnakeParams)
    voxel_leaf: float = 0.005
    min_region_points: int = 50
    dilation_radius: int = 7
    fallback_window: int = 61
    knn_k: int = 10
    metric: str = "chi2"
    max_peaks: Optional[int] = 10


@dataclass
class KeyPartDetection:
    """One recognized key-part hypothesis."""

    label: GarmentLabel
    contour: Optional[Contour]
    mask: Optional[Mask]
    seed_peak: Tuple[int, int]
    classification: Optional[Classification]

    @property
    def confidence(self) -> Tuple[float, int]:
        """(-mean neighbor distance of the label, votes); sorts descending.

        Mean distance separates a genuine key-part match from an arbitrary
        wrinkled region far better than the raw vote count, which saturates
        for any region that happens to sit nearest one class's entries.
        """
        if self.classification is None:
            return (-np.inf, 0)
        votes = self.classification.votes.get(self.label, 0)
        dist = self.classification.summed_distance.get(self.label, np.inf)
        if votes == 0:
            return (-np.inf, 0)
        return (-dist / votes, votes)


@dataclass
class PairSelection:
    """Outcome of a grasp-pair search; ``flag`` is 'ok', 'single' or 'empty'."""

    point_a: Optional[Tuple[int, int]]
    point_b: Optional[Tuple[int, int]]
    score: float
    flag: str
    candidates: PeakList

    @property
    def degraded(self) -> bool:
        return self.flag != "ok"


@dataclass
class GraspResult:
    detection: KeyPartDetection
    point_a: Tuple[int, int]
    point_b: Tuple[int, int]
    candidates: PeakList
    selection_score: float
    degraded: bool = False


def point_to_line_distance(p, a, b) -> float:
    """Perpendicular distance from p to the infinite line through a and b.

    When a == b the Euclidean distance to that point is returned.
    """
    p = np.asarray(p, dtype=np.float64)
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    ab = b - a
    norm = float(np.hypot(*ab))
    if norm == 0.0:
        return float(np.hypot(*(p - a)))
    return abs(float(ab[0] * (p - a)[1] - ab[1] * (p - a)[0])) / norm


def _peaks_in(peaks: PeakList, bits: np.ndarray) -> PeakList:
    if len(peaks) == 0:
        return peaks
    xs, ys = peaks.coords[:, 0], peaks.coords[:, 1]
    h, w = bits.shape
    inb = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    keep = np.zeros(len(peaks), dtype=bool)
    keep[inb] = bits[ys[inb], xs[inb]]
    return peaks.subset(keep)


def _pair_select(cands: PeakList, cost_fn) -> PairSelection:
    n = len(cands)
    if n == 0:
        return PairSelection(None, None, np.inf, "empty", cands)
    if n == 1:
        p = (int(cands.coords[0, 0]), int(cands.coords[0, 1]))
        return PairSelection(p, p, np.inf, "single", cands)
    best = None
    best_pair = None
    for i in range(n):
        for j in range(i + 1, n):
            cost = cost_fn(cands.coords[i], cands.coords[j])
            if best is None or cost < best:
                best = cost
                best_pair = (i, j)
    i, j = best_pair
    return PairSelection((int(cands.coords[i, 0]), int(cands.coords[i, 1])),
                         (int(cands.coords[j, 0]), int(cands.coords[j, 1])),
                         float(best), "ok", cands)


def select_points_neck(mask: Mask, peaks: PeakList,
                       dilation_radius: int = 7) -> PairSelection:
    """Grasp pair for neck-like parts.

    Candidates are ridge peaks inside the dilated mask but outside the mask
    itself; among all unordered candidate pairs, the pair whose connecting
    line passes closest to the mask center wins. Ties resolve to the first
    pair in candidate order (peaks are sorted by descending response).
    """
    if not mask.bits.any():
        raise ValueError("empty mask")
    ring = dilate_mask(mask, dilation_radius).bits & ~mask.bits
    cands = _peaks_in(peaks, ring)
    center = mask_center(mask)
    return _pair_select(cands, lambda p1, p2: point_to_line_distance(center, p1, p2))


def select_points_waist(mask: Mask, peaks: PeakList) -> PairSelection:
    """Grasp pair for waist-like parts.

    Candidates are ridge peaks inside the mask; the pair minimizing the
    summed distance to the mask's two extreme points (better of the two
    endpoint assignments) wins.
    """
    pe1, pe2 = extreme_points(mask)
    cands = _peaks_in(peaks, mask.bits)
    e1 = np.asarray(pe1, dtype=np.float64)
    e2 = np.asarray(pe2, dtype=np.float64)

    def cost(p1, p2):
        d1 = np.hypot(*(p1 - e1)) + np.hypot(*(p2 - e2))
        d2 = np.hypot(*(p1 - e2)) + np.hypot(*(p2 - e1))
        return min(d1, d2)

    return _pair_select(cands, cost)


def _threshold(values: np.ndarray, validity, percentile: float) -> float:
    v = values if validity is None else values[np.asarray(validity, dtype=bool)]
    v = v[v > 0]
    if v.size == 0:
        return np.inf
    return float(np.percentile(v, percentile))


def _region_mask(img: DepthImage, seed, cfg: PipelineConfig) -> Tuple[Mask, Optional[Contour]]:
    """Snake-delimited local region, with a fixed-window fallback.

    Falls back to a centered window only when the snake degenerates below
    3 px^2 of area. A snake that drifted off its seed keeps its mask with
    the seed pixel added, preserving the seed-inside-mask invariant.
    """
    sx, sy = int(seed[0]), int(seed[1])
    contour = None
    mask = None
    try:
        contour = evolve_snake(img, seed, cfg.snake_params)
        mask = contour_to_mask(contour, img.width, img.height)
    except ValueError:
        contour = None
    if mask is not None and mask.count() >= 3:
        if not mask.bits[sy, sx]:
            bits = mask.bits.copy()
            bits[sy, sx] = True
            mask = Mask(bits)
        return mask, contour
    r = cfg.fallback_window // 2
    bits = np.zeros((img.height, img.width), dtype=bool)
    bits[max(0, sy - r):sy + r + 1, max(0, sx - r):sx + r + 1] = True
    return Mask(bits), None


def recognize_garment_part(img: DepthImage, model: KnnModel,
                           cfg: PipelineConfig | None = None) -> List[KeyPartDetection]:
    """Recognize garment key parts from entropy peaks (Algorithm-1 style).

    Per entropy peak: delimit a local region with a snake, crop and
    voxel-downsample its cloud, estimate normals, describe, classify.
    Regions whose downsampled cloud falls below the point floor yield
    NoDetection entries. Per label only the highest-vote detection (ties:
    smallest summed distance) survives; the result is sorted by confidence.
    """
    if cfg is None:
        cfg = PipelineConfig()
    if not model.entries:
        raise ValueError("untrained model")
    cloud = depth_to_cloud(img, cfg.intrinsics)
    nmap = estimate_normals(cloud, cfg.normal_radius)
    emap = entropy_filter(nmap, cfg.entropy_window)
    thr = _threshold(emap.values, emap.validity, cfg.entropy_peak_percentile)
    peaks = find_local_maxima(emap, cfg.entropy_peak_radius, thr)
    if cfg.max_peaks is not None:
        peaks = peaks.subset(np.arange(len(peaks)) < cfg.max_peaks)

    detections: List[KeyPartDetection] = []
    for (px, py), _ in peaks:
        mask, contour = _region_mask(img, (px, py), cfg)
        keep = mask.bits.ravel() & cloud.valid
        region = PointCloud(points=cloud.points[keep],
                            valid=np.ones(int(keep.sum()), dtype=bool),
                            viewpoint=cloud.viewpoint)
        region = voxel_downsample(region, cfg.voxel_leaf)
        if len(region) < cfg.min_region_points:
            detections.append(KeyPartDetection(
                label=GarmentLabel.NO_DETECTION, contour=contour, mask=mask,
                seed_peak=(px, py), classification=None))
            continue
        normals = estimate_normals(region, cfg.normal_radius)
        try:
            desc = compute_vfh(region, normals, viewpoint=cloud.viewpoint)
        except DegenerateRegionError:
            detections.append(KeyPartDetection(
                label=GarmentLabel.NO_DETECTION, contour=contour, mask=mask,
                seed_peak=(px, py), classification=None))
            continue
        cls = knn_classify(model, desc, k=cfg.knn_k, metric=cfg.metric)
        detections.append(KeyPartDetection(
            label=cls.label, contour=contour, mask=mask,
            seed_peak=(px, py), classification=cls))

    def label_rank(det):
        # per-label rule: highest vote count, ties by smallest summed distance
        if det.classification is None:
            return (0, 0.0)
        votes = det.classification.votes.get(det.label, 0)
        return (votes, -det.classification.summed_distance.get(det.label, np.inf))

    best_per_label = {}
    for det in detections:
        cur = best_per_label.get(det.label)
        if cur is None or label_rank(det) > label_rank(cur):
            best_per_label[det.label] = det
    result = sorted(best_per_label.values(),
                    key=lambda d: d.confidence, reverse=True)
    return result


def detect_grasp_points(img: DepthImage, model: KnnModel,
                        cfg: PipelineConfig | None = None) -> GraspResult:
    """Full detection: recognize the key part, then select the grasp pair.

    Neck classes route through :func:`select_points_neck`, the waist class
    through :func:`select_points_waist`.
    """
    if cfg is None:
        cfg = PipelineConfig()
    detections = recognize_garment_part(img, model, cfg)
    real = [d for d in detections if d.label != GarmentLabel.NO_DETECTION]
    if not real:
        raise NoKeyPartError("no garment key part recognized")
    top = real[0]

    vmap = multiscale_vesselness(img, cfg.vessel_params)
    vthr = _threshold(vmap.values, None, cfg.vessel_peak_percentile)
    peaks = find_local_maxima(vmap, cfg.vessel_peak_radius, vthr)

    if top.label in (GarmentLabel.NECK_SHIRT, GarmentLabel.NECK_TSHIRT):
        sel = select_points_neck(top.mask, peaks, cfg.dilation_radius)
    elif top.label == GarmentLabel.WAIST_PANT:
        sel = select_points_waist(top.mask, peaks)
    else:  # pragma: no cover - NO_DETECTION filtered above
        raise NoKeyPartError(f"no grasp rule for label {top.label}")
    if sel.flag == "empty":
        raise NoCandidatesError("no grasp candidates near the detected key part")
    return GraspResult(detection=top, point_a=sel.point_a, point_b=sel.point_b,
                       candidates=sel.candidates, selection_score=sel.score,
                       degraded=sel.degraded)
