"""Viewpoint feature histograms and the k-NN garment-part classifier.

A descriptor summarizes a local region's cloud as 308 bins: three 45-bin
histograms of Darboux-frame angles between each point's normal and the
region centroid's mean normal, a 45-bin histogram of max-normalized
point-to-centroid distances, and a 128-bin histogram of normal angles
against the viewpoint-to-centroid direction. Each block normalizes to 1.

Classification is plurality voting over the k nearest stored descriptors;
vote ties go to the tied label with the smallest summed neighbor distance.
"""

from __future__ import annotations

import datetime
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Sequence, Tuple

import numpy as np

from .contours import Contour, contour_to_mask
from .geometry import (
    CameraIntrinsics,
    DepthImage,
    NormalMap,
    PointCloud,
    depth_to_cloud,
    estimate_normals,
    voxel_downsample,
)

SHAPE_BINS = 45
VIEW_BINS = 128
DESCRIPTOR_LENGTH = 4 * SHAPE_BINS + VIEW_BINS  # 308

MODEL_HEADER = "vfh-knn v1"


class GarmentLabel(str, Enum):
    NECK_SHIRT = "NeckShirt"
    NECK_TSHIRT = "NeckTShirt"
    WAIST_PANT = "WaistPant"
    NO_DETECTION = "NoDetection"


TRAINABLE_LABELS = (GarmentLabel.NECK_SHIRT, GarmentLabel.NECK_TSHIRT,
                    GarmentLabel.WAIST_PANT)


class DegenerateRegionError(ValueError):
    """Raised when a region has too few valid points for a descriptor."""


@dataclass
class VFHDescriptor:
    """308-bin compound histogram; see module docstring for the layout."""

    bins: np.ndarray

    def __post_init__(self):
        self.bins = np.asarray(self.bins, dtype=np.float64).reshape(-1)
        if self.bins.shape[0] != DESCRIPTOR_LENGTH:
            raise ValueError(f"descriptor must have {DESCRIPTOR_LENGTH} bins, "
                             f"got {self.bins.shape[0]}")
        if np.any(self.bins < 0):
            raise ValueError("descriptor bins must be non-negative")
        for lo, hi in self.block_slices():
            s = self.bins[lo:hi].sum()
            if not (s == 0.0 or abs(s - 1.0) <= 1e-9):
                raise ValueError(f"block [{lo}:{hi}] sums to {s}, expected 0 or 1")

    @staticmethod
    def block_slices() -> List[Tuple[int, int]]:
        edges = [0, SHAPE_BINS, 2 * SHAPE_BINS, 3 * SHAPE_BINS, 4 * SHAPE_BINS,
                 DESCRIPTOR_LENGTH]
        return list(zip(edges[:-1], edges[1:]))


@dataclass
class KnnEntry:
    descriptor: VFHDescriptor
    label: GarmentLabel


@dataclass
class KnnModel:
    entries: List[KnnEntry]
    metadata: Dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.entries)


@dataclass
class Classification:
    """Outcome of a k-NN query: winning label plus per-label diagnostics."""

    label: GarmentLabel
    votes: Dict[GarmentLabel, int]
    summed_distance: Dict[GarmentLabel, float]


def _normalized_hist(values, bins, lo, hi) -> np.ndarray:
    hist, _ = np.histogram(values, bins=bins, range=(lo, hi))
    hist = hist.astype(np.float64)
    total = hist.sum()
    return hist / total if total > 0 else hist


def compute_vfh(cloud: PointCloud, normals: NormalMap,
                viewpoint=None) -> VFHDescriptor:
    """Compute the 308-bin descriptor of a region cloud.

    Requires at least 2 points that are valid in both the cloud and the
    normal map. ``viewpoint`` defaults to the cloud's own viewpoint.
    """
    if viewpoint is None:
        viewpoint = cloud.viewpoint
    viewpoint = np.asarray(viewpoint, dtype=np.float64).reshape(3)

    ok = cloud.valid & normals.validity
    pts = cloud.points[ok]
    nrm = normals.normals[ok]
    if pts.shape[0] < 2:
        raise DegenerateRegionError(
            f"region has {pts.shape[0]} usable points, need at least 2")

    centroid = pts.mean(axis=0)
    mean_normal = nrm.mean(axis=0)
    mn = np.linalg.norm(mean_normal)
    u = mean_normal / mn if mn > 1e-12 else nrm[0]

    rel = pts - centroid
    dist = np.linalg.norm(rel, axis=1)
    max_dist = dist.max()

    # Darboux frame per point against the centroid: u = mean normal,
    # v = d x u, w = u x v, with d the unit centroid-to-point direction
    pair = dist > 1e-12
    d = rel[pair] / dist[pair, None]
    v = np.cross(d, u)
    vn = np.linalg.norm(v, axis=1)
    frame = vn > 1e-12
    d, v = d[frame], v[frame] / vn[frame, None]
    n_t = nrm[pair][frame]
    w = np.cross(u, v)

    cos_alpha = np.einsum("ij,ij->i", v, n_t)
    cos_phi = d @ u
    theta = np.arctan2(np.einsum("ij,ij->i", w, n_t), n_t @ u)

    alpha_block = _normalized_hist(cos_alpha, SHAPE_BINS, -1.0, 1.0)
    phi_block = _normalized_hist(cos_phi, SHAPE_BINS, -1.0, 1.0)
    theta_block = _normalized_hist(theta, SHAPE_BINS, -np.pi, np.pi)
    if max_dist > 0:
        dist_block = _normalized_hist(dist / max_dist, SHAPE_BINS, 0.0, 1.0)
    else:
        dist_block = _normalized_hist(dist, SHAPE_BINS, 0.0, 1.0)

    view_dir = centroid - viewpoint
    vd = np.linalg.norm(view_dir)
    view_dir = view_dir / vd if vd > 1e-12 else np.array([0.0, 0.0, 1.0])
    cos_view = nrm @ view_dir
    view_block = _normalized_hist(cos_view, VIEW_BINS, -1.0, 1.0)

    return VFHDescriptor(np.concatenate(
        [alpha_block, phi_block, theta_block, dist_block, view_block]))


def chi_square_distance(a: np.ndarray, b: np.ndarray) -> float:
    """sum((a-b)^2 / (a+b)) over bins where a+b > 0."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = a + b
    nz = den > 0
    diff = a[nz] - b[nz]
    return float(np.sum(diff * diff / den[nz]))


def euclidean_distance(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(np.asarray(a, float) - np.asarray(b, float)))


_METRICS = {"chi2": chi_square_distance, "euclidean": euclidean_distance}


def descriptor_distance(a: VFHDescriptor, b: VFHDescriptor,
                        metric: str = "chi2") -> float:
    return _METRICS[metric](a.bins, b.bins)


def knn_classify(model: KnnModel, d: VFHDescriptor, k: int = 10,
                 metric: str = "chi2") -> Classification:
    """Classify a descriptor by plurality vote over its k nearest entries.

    Vote ties resolve to the tied label with the smallest summed neighbor
    distance; exact distance ties resolve to the lexicographically smallest
    label. k is capped at the model size.
    """
    if not model.entries:
        raise ValueError("empty model")
    if k < 1:
        raise ValueError("k must be >= 1")
    k = min(k, len(model.entries))
    dist_fn = _METRICS[metric]
    dists = np.array([dist_fn(d.bins, e.descriptor.bins) for e in model.entries])
    nearest = np.argsort(dists, kind="stable")[:k]

    votes: Dict[GarmentLabel, int] = {}
    summed: Dict[GarmentLabel, float] = {}
    for idx in nearest:
        lab = model.entries[idx].label
        votes[lab] = votes.get(lab, 0) + 1
        summed[lab] = summed.get(lab, 0.0) + float(dists[idx])

    top = max(votes.values())
    tied = [lab for lab, n in votes.items() if n == top]
    winner = min(tied, key=lambda lab: (summed[lab], lab.value))
    return Classification(label=winner, votes=votes, summed_distance=summed)


def region_descriptor(img: DepthImage, polygon: Sequence, *,
                      intrinsics: CameraIntrinsics | None = None,
                      voxel_leaf: float = 0.005,
                      normal_radius: float = 0.02) -> VFHDescriptor:
    """Descriptor of the depth region inside a pixel polygon.

    Crops the back-projected cloud to the polygon mask, voxel-downsamples,
    estimates normals, and computes the descriptor with the camera origin
    as viewpoint. Raises DegenerateRegionError when too little valid depth
    survives.
    """
    mask = contour_to_mask(Contour(polygon), img.width, img.height)
    cloud = depth_to_cloud(img, intrinsics)
    keep = mask.bits.ravel() & cloud.valid
    if keep.sum() < 2:
        raise DegenerateRegionError("polygon covers fewer than 2 valid depth pixels")
    region = PointCloud(points=cloud.points[keep],
                        valid=np.ones(int(keep.sum()), dtype=bool),
                        viewpoint=cloud.viewpoint)
    region = voxel_downsample(region, voxel_leaf)
    if len(region) < 2:
        raise DegenerateRegionError("voxel filter left fewer than 2 points")
    normals = estimate_normals(region, normal_radius)
    return compute_vfh(region, normals, viewpoint=cloud.viewpoint)


def train_model(samples: Sequence[Tuple[DepthImage, Sequence, GarmentLabel]], *,
                intrinsics: CameraIntrinsics | None = None,
                voxel_leaf: float = 0.005,
                normal_radius: float = 0.02) -> KnnModel:
    """Build a k-NN model from (image, key-part polygon, label) samples.

    Samples that fail the degenerate-region check are skipped; the skip
    count lands in model.metadata["skipped"].
    """
    entries: List[KnnEntry] = []
    skipped = 0
    for img, polygon, label in samples:
        label = GarmentLabel(label)
        if label == GarmentLabel.NO_DETECTION:
            raise ValueError("cannot train on the NoDetection label")
        try:
            desc = region_descriptor(img, polygon, intrinsics=intrinsics,
                                     voxel_leaf=voxel_leaf,
                                     normal_radius=normal_radius)
        except DegenerateRegionError:
            skipped += 1
            continue
        entries.append(KnnEntry(descriptor=desc, label=label))
    if not entries:
        raise ValueError("no usable training samples")
    meta = {
        "skipped": skipped,
        "voxel_leaf": voxel_leaf,
        "normal_radius": normal_radius,
        "created": datetime.datetime.now().isoformat(timespec="seconds"),
    }
    return KnnModel(entries=entries, metadata=meta)


def save_model(model: KnnModel, path) -> None:
    """Write a model as line-oriented text: header, then one entry per line."""
    lines = [f"{MODEL_HEADER} {len(model.entries)}"]
    for e in model.entries:
        bins = " ".join(repr(float(b)) for b in e.descriptor.bins)
        lines.append(f"{e.label.value} {bins}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


class ModelFormatError(ValueError):
    """Raised on malformed model files; carries the offending line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


def load_model(path) -> KnnModel:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ModelFormatError("empty model file", 1)
    head = lines[0].split()
    if len(head) != 3 or " ".join(head[:2]) != MODEL_HEADER:
        raise ModelFormatError(f"bad header {lines[0]!r}", 1)
    try:
        count = int(head[2])
    except ValueError:
        raise ModelFormatError(f"bad entry count {head[2]!r}", 1) from None
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != count:
        raise ModelFormatError(f"expected {count} entries, found {len(body)}",
                               len(lines))
    entries = []
    for i, ln in enumerate(body, start=2):
        parts = ln.split()
        try:
            label = GarmentLabel(parts[0])
        except ValueError:
            raise ModelFormatError(f"unknown label {parts[0]!r}", i) from None
        if len(parts) - 1 != DESCRIPTOR_LENGTH:
            raise ModelFormatError(
                f"expected {DESCRIPTOR_LENGTH} bins, found {len(parts) - 1}", i)
        try:
            bins = np.array([float(tok) for tok in parts[1:]])
        except ValueError:
            raise ModelFormatError("unparseable bin value", i) from None
        entries.append(KnnEntry(descriptor=VFHDescriptor(bins), label=label))
    return KnnModel(entries=entries, metadata={"source": str(path)})
