"""Wrinkle-response filters for depth images.

Two complementary per-pixel responses are computed:

- the *orientation entropy* of surface normals in a local window, which is
  near zero on flat surfaces and grows with crumpledness, and
- a multiscale *tubular-ridge enhancement* built from the eigenvalues of the
  scale-normalized Hessian of the depth grid, which highlights the elongated
  shape of cloth wrinkles.

Both maps feed peak extraction (grasp/recognition candidates) and the
garment-wide roughness indices.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy import ndimage

from .geometry import DepthImage, NormalMap, spherical_angles

PHI_BINS = 64
THETA_BINS = 64

# below this max Frobenius norm a scale is considered structure-free; keeps
# the data-driven sensitivity from blowing up numerical dust on flat inputs
STRUCTURENESS_FLOOR = 1e-12

_BIN_CHUNK = 64


@dataclass
class EntropyMap:
    """Per-pixel orientation entropy in bits, with a validity mask."""

    width: int
    height: int
    values: np.ndarray
    validity: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.height, self.width)
        self.validity = np.asarray(self.validity, dtype=bool).reshape(self.height, self.width)


@dataclass
class VesselnessMap:
    """Per-pixel ridge response in [0, 1] and the scale attaining it."""

    width: int
    height: int
    values: np.ndarray
    best_scale: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64).reshape(self.height, self.width)
        self.best_scale = np.asarray(self.best_scale, dtype=np.float64).reshape(self.height, self.width)


@dataclass
class HessianEigen:
    """Eigen-decomposition of the scale-normalized Hessian at one pixel.

    Eigenvalues are ordered |lambda1| <= |lambda2|; eigenvectors are unit
    length and mutually orthogonal. ``valid`` is False when the supporting
    depth neighborhood is mostly missing.
    """

    lambda1: float
    lambda2: float
    e1: np.ndarray
    e2: np.ndarray
    valid: bool = True


@dataclass
class VesselnessParams:
    """Ridge-filter configuration.

    ``c=None`` derives the structureness sensitivity per scale per image as
    half the maximum Frobenius norm of the Hessian, the filter's
    data-driven default. ``polarity`` selects the ridge sign: ``"dark"``
    responds to depth minima (wrinkles bulging toward the camera, the
    default for raw depth), ``"bright"`` to depth maxima.
    """

    scales: Sequence[float] = (1.0, 2.0, 4.0, 8.0)
    beta: float = 0.5
    c: Optional[float] = None
    polarity: str = "dark"

    def __post_init__(self):
        self.scales = tuple(float(s) for s in self.scales)
        if not self.scales or any(s <= 0 for s in self.scales):
            raise ValueError("scales must be nonempty and positive")
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.c is not None and self.c <= 0:
            raise ValueError("c must be positive when given")
        if self.polarity not in ("dark", "bright"):
            raise ValueError("polarity must be 'dark' or 'bright'")


@dataclass
class PeakList:
    """Local maxima sorted by descending response.

    ``coords`` is an (N, 2) int array of (x, y) pixels; ``values`` the
    responses. Peaks are pairwise separated by at least the suppression
    radius they were extracted with.
    """

    coords: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        self.coords = np.asarray(self.coords, dtype=np.int64).reshape(-1, 2)
        self.values = np.asarray(self.values, dtype=np.float64).reshape(-1)

    def __len__(self) -> int:
        return self.coords.shape[0]

    def __iter__(self):
        for (x, y), v in zip(self.coords, self.values):
            yield (int(x), int(y)), float(v)

    def subset(self, keep: np.ndarray) -> "PeakList":
        return PeakList(self.coords[keep], self.values[keep])


def shannon_entropy(hist) -> float:
    """Shannon entropy in bits of a histogram; normalizes internally, 0*log0 = 0."""
    h = np.asarray(hist, dtype=np.float64).ravel()
    total = h.sum()
    if total <= 0:
        return 0.0
    p = h[h > 0] / total
    return float(-(p * np.log2(p)).sum())


def _require_organized(nmap: NormalMap) -> Tuple[int, int]:
    if nmap.organized_shape is None:
        raise ValueError("normal map is not organized on a pixel lattice")
    return nmap.organized_shape


def orientation_histogram(nmap: NormalMap, center, window: int) -> np.ndarray:
    """64x64 inclination/azimuth histogram of normals around one pixel.

    The window is clipped at image borders. The histogram counts valid
    normals over (phi in [0, pi]) x (theta in (-pi, pi]) and is normalized
    to sum 1; an all-invalid window yields the all-zero histogram.
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    w, h = _require_organized(nmap)
    x, y = int(center[0]), int(center[1])
    if not (0 <= x < w and 0 <= y < h):
        raise ValueError(f"center {center} out of bounds for {w}x{h}")
    r = window // 2
    normals = nmap.normals.reshape(h, w, 3)
    validity = nmap.validity.reshape(h, w)
    sl = (slice(max(0, y - r), min(h, y + r + 1)),
          slice(max(0, x - r), min(w, x + r + 1)))
    sel = normals[sl][validity[sl]]
    hist = np.zeros((PHI_BINS, THETA_BINS))
    if sel.shape[0] == 0:
        return hist
    phi, theta = spherical_angles(sel)
    hist, _, _ = np.histogram2d(phi, theta, bins=(PHI_BINS, THETA_BINS),
                                range=((0.0, np.pi), (-np.pi, np.pi)))
    return hist / hist.sum()


def _angle_bins(phi: np.ndarray, theta: np.ndarray) -> np.ndarray:
    """Flat 0..4095 bin index matching orientation_histogram's binning."""
    pb = np.minimum((phi / np.pi * PHI_BINS).astype(np.int64), PHI_BINS - 1)
    tb = np.minimum(((theta + np.pi) / (2 * np.pi) * THETA_BINS).astype(np.int64),
                    THETA_BINS - 1)
    return pb * THETA_BINS + tb


def _window_sum(a: np.ndarray, r: int) -> np.ndarray:
    """Per-pixel sum over the (2r+1)^2 window clipped to the image."""
    h, w = a.shape[-2:]
    dtype = np.int64 if np.issubdtype(a.dtype, np.integer) or a.dtype == bool else np.float64
    c = np.zeros(a.shape[:-2] + (h + 1, w + 1), dtype=dtype)
    c[..., 1:, 1:] = np.cumsum(np.cumsum(a, axis=-2, dtype=dtype), axis=-1)
    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)
    return (c[..., y1[:, None], x1[None, :]] - c[..., y0[:, None], x1[None, :]]
            - c[..., y1[:, None], x0[None, :]] + c[..., y0[:, None], x0[None, :]])


def _window_area(h: int, w: int, r: int) -> np.ndarray:
    ys = np.minimum(np.arange(h) + r + 1, h) - np.maximum(np.arange(h) - r, 0)
    xs = np.minimum(np.arange(w) + r + 1, w) - np.maximum(np.arange(w) - r, 0)
    return ys[:, None] * xs[None, :]


def entropy_filter(nmap: NormalMap, window: int = 21) -> EntropyMap:
    """Per-pixel Shannon entropy (bits) of the local orientation histogram.

    Equivalent to running :func:`orientation_histogram` at every pixel and
    taking -sum(p log2 p), but computed with summed-area tables over the
    occupied angle bins. Pixels whose window holds more than 50% invalid
    normals, or whose own normal is invalid, are flagged invalid (their
    value is still the entropy of whatever valid normals remain).
    """
    if window < 3 or window % 2 == 0:
        raise ValueError("window must be odd and >= 3")
    w, h = _require_organized(nmap)
    r = window // 2
    normals = nmap.normals.reshape(h, w, 3)
    validity = nmap.validity.reshape(h, w)

    flat_bins = np.full((h, w), -1, dtype=np.int64)
    if validity.any():
        phi, theta = spherical_angles(normals[validity])
        flat_bins[validity] = _angle_bins(phi, theta)

    area = _window_area(h, w, r)
    nvalid = _window_sum(validity.astype(np.int64), r)
    values = np.zeros((h, w))
    occupied = np.unique(flat_bins[flat_bins >= 0])
    safe_n = np.where(nvalid > 0, nvalid, 1)
    for start in range(0, occupied.size, _BIN_CHUNK):
        chunk = occupied[start:start + _BIN_CHUNK]
        onehot = flat_bins[None, :, :] == chunk[:, None, None]
        counts = _window_sum(onehot, r)
        p = counts / safe_n
        with np.errstate(divide="ignore", invalid="ignore"):
            term = np.where(counts > 0, p * np.log2(np.where(counts > 0, p, 1.0)), 0.0)
        values -= term.sum(axis=0)
    values[nvalid == 0] = 0.0

    invalid_count = area - nvalid
    map_valid = (invalid_count * 2 <= area) & validity
    return EntropyMap(width=w, height=h, values=values, validity=map_valid)


def _fill_invalid_depth(img: DepthImage) -> Tuple[np.ndarray, np.ndarray]:
    """Replace sentinel pixels by their nearest valid depth; returns (filled, valid)."""
    valid = img.valid_mask
    data = img.data
    if valid.all():
        return data.astype(np.float64), valid
    if not valid.any():
        return np.zeros_like(data), valid
    _, (iy, ix) = ndimage.distance_transform_edt(~valid, return_indices=True)
    return data[iy, ix], valid


def _detrend(data: np.ndarray) -> np.ndarray:
    """Subtract the least-squares plane.

    Second derivatives are unaffected in exact arithmetic; discretely this
    stops reflective padding from manufacturing border curvature on tilted
    (linear) inputs.
    """
    h, w = data.shape
    y, x = np.mgrid[0:h, 0:w]
    A = np.stack([x.ravel(), y.ravel(), np.ones(h * w)], axis=1)
    coef, *_ = np.linalg.lstsq(A, data.ravel(), rcond=None)
    return data - (A @ coef).reshape(h, w)


def _hessian_components(data: np.ndarray, sigma: float):
    """Scale-normalized Gaussian-derivative Hessian (Hxx, Hxy, Hyy)."""
    s2 = sigma * sigma
    hxx = ndimage.gaussian_filter(data, sigma, order=(0, 2), mode="reflect") * s2
    hyy = ndimage.gaussian_filter(data, sigma, order=(2, 0), mode="reflect") * s2
    hxy = ndimage.gaussian_filter(data, sigma, order=(1, 1), mode="reflect") * s2
    return hxx, hxy, hyy


def _hessian_eigenvalues(hxx, hxy, hyy):
    """Eigenvalues of the symmetric 2x2 field, ordered |l1| <= |l2|."""
    half_trace = 0.5 * (hxx + hyy)
    disc = np.sqrt(np.square(0.5 * (hxx - hyy)) + np.square(hxy))
    la = half_trace + disc
    lb = half_trace - disc
    swap = np.abs(la) > np.abs(lb)
    l1 = np.where(swap, lb, la)
    l2 = np.where(swap, la, lb)
    return l1, l2


def hessian_at_scale(img: DepthImage, p, sigma: float) -> HessianEigen:
    """Eigen-decomposition of the scale-normalized Hessian at one pixel.

    ``valid`` is False when more than half of the pixel's Gaussian support
    window (radius 3 sigma) has missing depth, or the pixel itself does.
    """
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    x, y = int(p[0]), int(p[1])
    if not (0 <= x < img.width and 0 <= y < img.height):
        raise ValueError(f"pixel {p} out of bounds")
    filled, valid = _fill_invalid_depth(img)
    hxx, hxy, hyy = _hessian_components(_detrend(filled), sigma)
    a, b, c = hxx[y, x], hxy[y, x], hyy[y, x]
    l1, l2 = _hessian_eigenvalues(np.float64(a), np.float64(b), np.float64(c))
    l1, l2 = float(l1), float(l2)

    # eigenvector of l1; pick the better-conditioned formula
    if abs(b) + abs(l1 - a) > 1e-300 and max(abs(b), abs(l1 - a)) >= max(abs(b), abs(l1 - c)):
        e1 = np.array([b, l1 - a])
    else:
        e1 = np.array([l1 - c, b])
    n = np.linalg.norm(e1)
    e1 = e1 / n if n > 0 else np.array([1.0, 0.0])
    e2 = np.array([-e1[1], e1[0]])

    r = int(np.ceil(3 * sigma))
    sl = (slice(max(0, y - r), min(img.height, y + r + 1)),
          slice(max(0, x - r), min(img.width, x + r + 1)))
    patch = valid[sl]
    ok = bool(valid[y, x]) and (patch.size - patch.sum()) * 2 <= patch.size
    return HessianEigen(lambda1=l1, lambda2=l2, e1=e1, e2=e2, valid=ok)


def _vesselness_from_eigen(l1, l2, params: VesselnessParams) -> np.ndarray:
    sign = 1.0 if params.polarity == "dark" else -1.0
    s = np.sqrt(l1 * l1 + l2 * l2)
    smax = float(s.max()) if s.size else 0.0
    if smax <= STRUCTURENESS_FLOOR:
        return np.zeros_like(s)
    c = params.c if params.c is not None else 0.5 * smax
    with np.errstate(divide="ignore", invalid="ignore"):
        rb = np.where(l2 != 0, np.abs(l1) / np.abs(np.where(l2 != 0, l2, 1.0)), 0.0)
    v = np.exp(-np.square(rb) / (2 * params.beta ** 2)) * \
        (1.0 - np.exp(-np.square(s) / (2 * c * c)))
    v[sign * l2 <= 0] = 0.0
    return v


def vesselness_at_scale(img: DepthImage, sigma: float,
                        params: VesselnessParams | None = None) -> VesselnessMap:
    """Single-scale tubular-ridge response of the depth grid.

    With R_B = |l1|/|l2| and S = sqrt(l1^2 + l2^2), the response is
    exp(-R_B^2 / 2 beta^2) * (1 - exp(-S^2 / 2 c^2)), zeroed where l2's
    sign violates the configured polarity.
    """
    if params is None:
        params = VesselnessParams()
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    filled, _ = _fill_invalid_depth(img)
    hxx, hxy, hyy = _hessian_components(_detrend(filled), sigma)
    l1, l2 = _hessian_eigenvalues(hxx, hxy, hyy)
    v = _vesselness_from_eigen(l1, l2, params)
    return VesselnessMap(width=img.width, height=img.height, values=v,
                         best_scale=np.full_like(v, sigma))


def multiscale_vesselness(img: DepthImage,
                          params: VesselnessParams | None = None) -> VesselnessMap:
    """Pointwise maximum of the ridge response over all configured scales.

    ``best_scale`` records the argmax, with ties resolved toward the
    smallest scale (scales are scanned in ascending order).
    """
    if params is None:
        params = VesselnessParams()
    filled, _ = _fill_invalid_depth(img)
    detrended = _detrend(filled)
    best = np.zeros((img.height, img.width))
    best_scale = np.full((img.height, img.width), min(params.scales))
    for sigma in sorted(params.scales):
        hxx, hxy, hyy = _hessian_components(detrended, sigma)
        l1, l2 = _hessian_eigenvalues(hxx, hxy, hyy)
        v = _vesselness_from_eigen(l1, l2, params)
        better = v > best
        best[better] = v[better]
        best_scale[better] = sigma
    return VesselnessMap(width=img.width, height=img.height, values=best,
                         best_scale=best_scale)


def find_local_maxima(resp, radius: float, threshold: float) -> PeakList:
    """Strict local maxima with greedy non-maximum suppression.

    A pixel qualifies when its response is strictly greater than every
    neighbor within Euclidean ``radius`` and at least ``threshold``.
    Candidates are then scanned in descending response order (ties by
    row-major pixel order) and kept only when at least ``radius`` away from
    every previously kept peak.

    ``resp`` may be an EntropyMap, a VesselnessMap, or a bare 2D array;
    invalid map pixels are excluded.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    values = np.asarray(getattr(resp, "values", resp), dtype=np.float64)
    validity = getattr(resp, "validity", None)
    work = values.copy()
    if validity is not None:
        work[~np.asarray(validity, dtype=bool)] = -np.inf

    ri = int(np.floor(radius))
    dy, dx = np.mgrid[-ri:ri + 1, -ri:ri + 1]
    footprint = (dx * dx + dy * dy) <= radius * radius
    footprint[ri, ri] = False
    if not footprint.any():
        footprint[ri, ri + 1 if ri + 1 < footprint.shape[1] else ri - 1] = True
    neigh_max = ndimage.maximum_filter(work, footprint=footprint,
                                       mode="constant", cval=-np.inf)
    cand = (work > neigh_max) & (work >= threshold) & np.isfinite(work)
    ys, xs = np.nonzero(cand)
    if ys.size == 0:
        return PeakList(np.zeros((0, 2), dtype=np.int64), np.zeros(0))
    vals = work[ys, xs]
    order = np.lexsort((xs, ys, -vals))
    ys, xs, vals = ys[order], xs[order], vals[order]

    kept_x, kept_y, kept_v = [], [], []
    r2 = radius * radius
    for x, y, v in zip(xs, ys, vals):
        ok = True
        for kx, ky in zip(kept_x, kept_y):
            if (kx - x) ** 2 + (ky - y) ** 2 < r2:
                ok = False
                break
        if ok:
            kept_x.append(int(x))
            kept_y.append(int(y))
            kept_v.append(float(v))
    return PeakList(np.stack([kept_x, kept_y], axis=1) if kept_x else np.zeros((0, 2)),
                    np.array(kept_v))


def roughness_index(resp, garment_mask) -> Tuple[float, float]:
    """Garment-wide wrinkledness summary: (mean, histogram entropy in bits).

    The mean is taken over mask pixels; the entropy is of the 64-bin
    histogram of responses over [0, max-in-mask].
    """
    values = np.asarray(getattr(resp, "values", resp), dtype=np.float64)
    bits = np.asarray(getattr(garment_mask, "bits", garment_mask), dtype=bool)
    if bits.shape != values.shape:
        raise ValueError("mask and map shapes differ")
    sel = values[bits]
    if sel.size == 0:
        raise ValueError("empty garment mask")
    mean = float(sel.mean())
    vmax = float(sel.max())
    if vmax <= 0:
        return mean, 0.0
    hist, _ = np.histogram(sel, bins=64, range=(0.0, vmax))
    return mean, shannon_entropy(hist)
