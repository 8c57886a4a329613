"""Depth-image and point-cloud primitives.

Conventions used throughout the package:

- pixel coordinates are ``(x, y)`` with ``x`` the column index; image arrays
  are indexed ``[y, x]``,
- depth values are ranges in meters along the optical axis, with 0 reserved
  as the missing-depth sentinel,
- point clouds are ``(N, 3)`` float arrays in camera coordinates (x right,
  y down, z forward).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.spatial import cKDTree

DEPTH_SENTINEL = 0.0

# pair-accumulation block size for normal estimation; bounds peak memory
_PAIR_CHUNK = 4_000_000


@dataclass(frozen=True)
class CameraIntrinsics:
    """Pinhole camera parameters, all in pixels."""

    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")


def default_intrinsics(width: int, height: int) -> CameraIntrinsics:
    """Intrinsics of a common structured-light sensor scaled to the image size.

    The reference calibration is fx = fy = 525 px for 640x480 with the
    principal point at the image center; other sizes scale proportionally.
    """
    f = 525.0 * width / 640.0
    return CameraIntrinsics(fx=f, fy=f, cx=(width - 1) / 2.0, cy=(height - 1) / 2.0)


@dataclass
class DepthImage:
    """Organized grid of range samples in meters.

    ``data`` is a (height, width) float array; entries equal to
    ``invalid_value`` mark missing depth, every other entry must be a
    positive finite range.
    """

    width: int
    height: int
    data: np.ndarray
    invalid_value: float = DEPTH_SENTINEL

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValueError("image dimensions must be positive")
        self.data = np.asarray(self.data, dtype=np.float64)
        if self.data.size != self.width * self.height:
            raise ValueError("data length does not match width*height")
        self.data = self.data.reshape(self.height, self.width)
        if not np.all(np.isfinite(self.data)):
            raise ValueError("depth values must be finite")
        bad = (self.data <= 0) & (self.data != self.invalid_value)
        if np.any(bad):
            raise ValueError("depth values must be positive or the sentinel")

    @classmethod
    def from_array(cls, data, invalid_value: float = DEPTH_SENTINEL) -> "DepthImage":
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise ValueError("expected a 2D depth array")
        return cls(width=data.shape[1], height=data.shape[0], data=data,
                   invalid_value=invalid_value)

    @property
    def valid_mask(self) -> np.ndarray:
        return self.data != self.invalid_value


@dataclass
class PointCloud:
    """3D points in meters, optionally retaining the sensor pixel lattice.

    Invalid (missing) points are flagged in ``valid`` rather than dropped so
    organized clouds keep their full lattice. ``viewpoint`` is the sensor
    position the cloud was captured from.
    """

    points: np.ndarray
    valid: np.ndarray
    organized_shape: Optional[Tuple[int, int]] = None  # (width, height)
    viewpoint: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        self.valid = np.asarray(self.valid, dtype=bool).reshape(-1)
        self.viewpoint = np.asarray(self.viewpoint, dtype=np.float64).reshape(3)
        if self.points.shape[0] != self.valid.shape[0]:
            raise ValueError("points and valid flags disagree in length")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")
        if self.organized_shape is not None:
            w, h = self.organized_shape
            if w * h != self.points.shape[0]:
                raise ValueError("organized_shape does not match point count")

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass
class NormalMap:
    """Per-point unit surface normals with validity flags.

    Normals are oriented toward the viewpoint they were estimated from.
    ``organized_shape`` is carried over from the source cloud when present.
    """

    normals: np.ndarray
    validity: np.ndarray
    organized_shape: Optional[Tuple[int, int]] = None

    def __post_init__(self):
        self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        self.validity = np.asarray(self.validity, dtype=bool).reshape(-1)
        if self.normals.shape[0] != self.validity.shape[0]:
            raise ValueError("normals and validity disagree in length")


class SphericalNormal(NamedTuple):
    """Spherical angles of a unit vector: inclination and azimuth, radians."""

    phi: float    # inclination, [0, pi]
    theta: float  # azimuth, (-pi, pi]


def depth_to_cloud(img: DepthImage, k: CameraIntrinsics | None = None) -> PointCloud:
    """Back-project a depth image into an organized point cloud.

    Pixel (u, v) with depth d maps to ((u-cx)*d/fx, (v-cy)*d/fy, d).
    Sentinel pixels become invalid-flagged points at the origin. The cloud
    viewpoint is the camera origin.
    """
    if k is None:
        k = default_intrinsics(img.width, img.height)
    u, v = np.meshgrid(np.arange(img.width), np.arange(img.height))
    d = img.data
    valid = img.valid_mask
    x = np.where(valid, (u - k.cx) * d / k.fx, 0.0)
    y = np.where(valid, (v - k.cy) * d / k.fy, 0.0)
    z = np.where(valid, d, 0.0)
    points = np.stack([x.ravel(), y.ravel(), z.ravel()], axis=1)
    return PointCloud(points=points, valid=valid.ravel(),
                      organized_shape=(img.width, img.height),
                      viewpoint=np.zeros(3))


def cloud_to_depth(cloud: PointCloud) -> DepthImage:
    """Collapse an organized cloud back to its per-pixel z grid.

    Invalid points (and points with non-positive z) map to the sentinel.
    """
    if cloud.organized_shape is None:
        raise ValueError("cloud is not organized; no pixel lattice to map onto")
    w, h = cloud.organized_shape
    z = cloud.points[:, 2].copy()
    ok = cloud.valid & (z > 0)
    z[~ok] = DEPTH_SENTINEL
    return DepthImage(width=w, height=h, data=z.reshape(h, w))


# transverse norms below this snap to the pole: the azimuth of a vector this
# close to +-z is numerical noise, not orientation information
_POLE_EPS = 1e-9


def to_spherical(n) -> SphericalNormal:
    """Spherical angles of a unit vector.

    phi = arccos(z), theta = atan2(y, x). At the poles (x = y = 0, within
    1e-9) theta is defined as 0. Inputs whose norm deviates from 1 by more
    than 1e-6 are rejected.
    """
    v = np.asarray(n, dtype=np.float64).reshape(3)
    norm = float(np.linalg.norm(v))
    if abs(norm - 1.0) > 1e-6:
        raise ValueError(f"expected a unit vector, got norm {norm!r}")
    phi = float(np.arccos(np.clip(v[2], -1.0, 1.0)))
    if np.hypot(v[0], v[1]) < _POLE_EPS:
        theta = 0.0
    else:
        theta = float(np.arctan2(v[1], v[0]))
        if theta == -np.pi:
            theta = np.pi
    return SphericalNormal(phi=phi, theta=theta)


def spherical_angles(vectors: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Vectorized spherical angles for an (N, 3) array of unit vectors.

    Same conventions as :func:`to_spherical`; does not validate norms.
    """
    v = np.asarray(vectors, dtype=np.float64).reshape(-1, 3)
    phi = np.arccos(np.clip(v[:, 2], -1.0, 1.0))
    theta = np.arctan2(v[:, 1], v[:, 0])
    pole = np.hypot(v[:, 0], v[:, 1]) < _POLE_EPS
    theta[pole] = 0.0
    theta[theta == -np.pi] = np.pi
    return phi, theta


def estimate_normals(cloud: PointCloud, radius: float) -> NormalMap:
    """Estimate oriented surface normals from metric-radius neighborhoods.

    For every valid point, the normal is the smallest-eigenvalue eigenvector
    of the covariance of all valid points within ``radius``, flipped so it
    faces the cloud viewpoint. Points with fewer than 3 neighbors (besides
    themselves) are flagged invalid.

    Works on organized and unorganized clouds alike; neighborhoods are true
    3D radius queries, so results are invariant under rigid motion of
    cloud + viewpoint.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    if len(cloud) == 0:
        raise ValueError("empty cloud")
    n = len(cloud)
    normals = np.zeros((n, 3))
    validity = np.zeros(n, dtype=bool)
    vidx = np.flatnonzero(cloud.valid)
    if vidx.size == 0:
        return NormalMap(normals, validity, cloud.organized_shape)

    pts = cloud.points[vidx]
    m = pts.shape[0]
    tree = cKDTree(pts)
    pairs = tree.query_pairs(radius, output_type="ndarray")

    # accumulate first and second moments per point; each pair contributes
    # to both members, self terms added afterward
    counts = np.ones(m, dtype=np.int64)
    s1 = pts.copy()
    keys = [(0, 0), (0, 1), (0, 2), (1, 1), (1, 2), (2, 2)]
    s2 = {ab: pts[:, ab[0]] * pts[:, ab[1]] for ab in keys}
    for start in range(0, pairs.shape[0], _PAIR_CHUNK):
        block = pairs[start:start + _PAIR_CHUNK]
        i = np.concatenate([block[:, 0], block[:, 1]])
        j = np.concatenate([block[:, 1], block[:, 0]])
        pj = pts[j]
        counts += np.bincount(i, minlength=m)
        for c in range(3):
            s1[:, c] += np.bincount(i, weights=pj[:, c], minlength=m)
        for a, b in keys:
            s2[(a, b)] += np.bincount(i, weights=pj[:, a] * pj[:, b], minlength=m)

    mu = s1 / counts[:, None]
    cov = np.empty((m, 3, 3))
    for a, b in keys:
        cab = s2[(a, b)] / counts - mu[:, a] * mu[:, b]
        cov[:, a, b] = cab
        cov[:, b, a] = cab

    enough = counts - 1 >= 3
    nrm = np.zeros((m, 3))
    if np.any(enough):
        _, vecs = np.linalg.eigh(cov[enough])
        nrm[enough] = vecs[:, :, 0]  # smallest-eigenvalue eigenvector

    # orient toward the viewpoint
    to_vp = cloud.viewpoint[None, :] - pts
    flip = np.einsum("ij,ij->i", nrm, to_vp) < 0
    nrm[flip] *= -1.0

    normals[vidx] = nrm
    validity[vidx] = enough
    return NormalMap(normals, validity, cloud.organized_shape)


def voxel_downsample(cloud: PointCloud, leaf: float) -> PointCloud:
    """Replace all valid points in each cubic cell with their centroid.

    The grid origin is fixed at 0, cells are indexed by floor(p/leaf), and
    output points are ordered by lexicographic voxel index, which makes the
    operation deterministic. Output clouds are unorganized.
    """
    if leaf <= 0:
        raise ValueError("leaf size must be positive")
    pts = cloud.points[cloud.valid]
    if pts.shape[0] == 0:
        return PointCloud(points=np.zeros((0, 3)), valid=np.zeros(0, dtype=bool),
                          organized_shape=None, viewpoint=cloud.viewpoint)
    idx = np.floor(pts / leaf).astype(np.int64)
    uniq, inverse = np.unique(idx, axis=0, return_inverse=True)
    k = uniq.shape[0]
    counts = np.bincount(inverse, minlength=k).astype(np.float64)
    centroids = np.stack(
        [np.bincount(inverse, weights=pts[:, c], minlength=k) / counts
         for c in range(3)], axis=1)
    return PointCloud(points=centroids, valid=np.ones(k, dtype=bool),
                      organized_shape=None, viewpoint=cloud.viewpoint)
