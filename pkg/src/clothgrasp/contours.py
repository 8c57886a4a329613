"""Active contours and the mask geometry the grasp selectors build on.

The snake is the classic closed elastic curve: internal elasticity and
bending forces shrink and smooth it, an external force derived from the
depth gradient pulls vertices onto nearby boundaries. The internal step is
solved semi-implicitly (periodic pentadiagonal system), the external force
explicitly, and the step size is halved whenever a step would raise the
total energy, which makes the energy non-increasing by construction.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from .geometry import DepthImage


@dataclass
class Mask:
    """Per-pixel boolean region, indexed [y, x]."""

    bits: np.ndarray

    def __post_init__(self):
        self.bits = np.asarray(self.bits, dtype=bool)
        if self.bits.ndim != 2:
            raise ValueError("mask must be 2D")

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    def count(self) -> int:
        return int(self.bits.sum())


@dataclass
class Contour:
    """Closed polyline of subpixel (x, y) vertices.

    Consecutive duplicate vertices are merged at construction; at least 3
    distinct consecutive vertices are required.
    """

    vertices: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 2)
        if v.shape[0] >= 2:
            keep = np.ones(v.shape[0], dtype=bool)
            keep[1:] = np.any(v[1:] != v[:-1], axis=1)
            if np.all(v[-1] == v[0]) and keep[1:].any():
                keep[-1] = False  # explicit closing vertex
            v = v[keep]
        if v.shape[0] < 3:
            raise ValueError("contour needs at least 3 distinct vertices")
        self.vertices = v

    def __len__(self) -> int:
        return self.vertices.shape[0]

    def perimeter(self) -> float:
        d = np.diff(np.vstack([self.vertices, self.vertices[:1]]), axis=0)
        return float(np.hypot(d[:, 0], d[:, 1]).sum())


@dataclass
class SnakeParams:
    """Weights and schedule for snake evolution.

    alpha weights elasticity (first differences), beta_rigidity bending
    (second differences), kappa the external depth-gradient force, gamma is
    the time step. Evolution stops when the mean vertex displacement drops
    below convergence_eps or after max_iters iterations.
    """

    alpha: float = 0.1
    beta_rigidity: float = 0.05
    gamma: float = 1.0
    kappa: float = 2.0
    max_iters: int = 1500
    convergence_eps: float = 0.01
    init_radius: float = 32.0
    n_vertices: int = 64

    def __post_init__(self):
        if min(self.alpha, self.beta_rigidity, self.gamma, self.kappa) < 0:
            raise ValueError("weights must be non-negative")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if self.n_vertices < 8:
            raise ValueError("n_vertices must be >= 8")


def _cyclic_diff_matrix(n: int) -> np.ndarray:
    """Periodic second-difference operator L with stencil (-1, 2, -1)."""
    L = np.zeros((n, n))
    idx = np.arange(n)
    L[idx, idx] = 2.0
    L[idx, (idx - 1) % n] = -1.0
    L[idx, (idx + 1) % n] = -1.0
    return L


def snake_energy(gradmag: np.ndarray, vertices: np.ndarray, params: SnakeParams) -> float:
    """Total snake energy of a closed polygon on a gradient-magnitude image.

    E = sum(alpha |v_i - v_{i-1}|^2 + beta |v_{i-1} - 2 v_i + v_{i+1}|^2)
        - kappa * sum G(v_i), with G sampled bilinearly.
    """
    v = np.asarray(vertices, dtype=np.float64)
    d1 = v - np.roll(v, 1, axis=0)
    d2 = np.roll(v, 1, axis=0) - 2 * v + np.roll(v, -1, axis=0)
    internal = params.alpha * np.sum(d1 * d1) + params.beta_rigidity * np.sum(d2 * d2)
    g = ndimage.map_coordinates(gradmag, [v[:, 1], v[:, 0]], order=1, mode="nearest")
    return float(internal - params.kappa * np.sum(g))


def _gradient_magnitude(img: DepthImage, smooth_sigma: float) -> np.ndarray:
    """Depth-edge map: gradient magnitude of the smoothed depth, peak-normalized.

    Normalizing to max 1 makes the external force scale independent of depth
    units and step height, so one set of snake weights works on centimeter
    garment edges and large synthetic steps alike.
    """
    from .wrinkles import _fill_invalid_depth  # local import avoids a cycle at module load

    filled, _ = _fill_invalid_depth(img)
    smoothed = ndimage.gaussian_filter(filled, smooth_sigma, mode="reflect")
    gy, gx = np.gradient(smoothed)
    g = np.hypot(gx, gy)
    peak = g.max()
    return g / peak if peak > 0 else g


def evolve_snake(img: DepthImage, seed, params: SnakeParams | None = None,
                 smooth_sigma: float = 2.0) -> Contour:
    """Evolve a closed snake from a circle around ``seed``.

    The external image force is the gradient of the gradient-magnitude of
    the sigma-smoothed depth, pulling vertices toward depth edges. The
    returned contour's vertices are clamped to image bounds and its final
    energy never exceeds the initial energy (the step size is halved on any
    energy increase).
    """
    if params is None:
        params = SnakeParams()
    sx, sy = float(seed[0]), float(seed[1])
    if not (0 <= sx < img.width and 0 <= sy < img.height):
        raise ValueError(f"seed {seed} out of bounds for {img.width}x{img.height}")
    if not img.valid_mask[int(round(sy)), int(round(sx))]:
        raise ValueError(f"seed {seed} lies on invalid depth")

    gradmag = _gradient_magnitude(img, smooth_sigma)
    gy, gx = np.gradient(gradmag)

    n = params.n_vertices
    angles = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    v = np.stack([sx + params.init_radius * np.cos(angles),
                  sy + params.init_radius * np.sin(angles)], axis=1)
    v[:, 0] = np.clip(v[:, 0], 0, img.width - 1)
    v[:, 1] = np.clip(v[:, 1], 0, img.height - 1)

    L = _cyclic_diff_matrix(n)
    internal = 2.0 * (params.alpha * L + params.beta_rigidity * (L @ L))
    solver_cache = {}

    def solver(g):
        if g not in solver_cache:
            solver_cache[g] = np.linalg.inv(np.eye(n) + g * internal)
        return solver_cache[g]

    energy = snake_energy(gradmag, v, params)

    for _ in range(params.max_iters):
        fx = ndimage.map_coordinates(gx, [v[:, 1], v[:, 0]], order=1, mode="nearest")
        fy = ndimage.map_coordinates(gy, [v[:, 1], v[:, 0]], order=1, mode="nearest")
        force = params.kappa * np.stack([fx, fy], axis=1)

        # step-size backtracking restarts every iteration; accepted steps
        # never increase the energy, so the overall descent is monotone
        gamma = params.gamma
        stepped = False
        while gamma > 1e-9:
            cand = solver(gamma) @ (v + gamma * force)
            cand[:, 0] = np.clip(cand[:, 0], 0, img.width - 1)
            cand[:, 1] = np.clip(cand[:, 1], 0, img.height - 1)
            cand_energy = snake_energy(gradmag, cand, params)
            if cand_energy <= energy + 1e-12:
                stepped = True
                break
            gamma *= 0.5
        if not stepped:
            break
        disp = float(np.hypot(*(cand - v).T).mean())
        v, energy = cand, cand_energy
        if disp < params.convergence_eps:
            break

    return Contour(vertices=v)


def _edges_of(vertices: np.ndarray) -> np.ndarray:
    """(E, 4) array of x1, y1, x2, y2 closed-polygon edges, zero-length dropped."""
    a = vertices
    b = np.roll(vertices, -1, axis=0)
    edges = np.hstack([a, b])
    keep = np.any(a != b, axis=1)
    return edges[keep]


def _even_odd_inside(vertices: np.ndarray, width: int, height: int) -> np.ndarray:
    """Pixel centers inside the polygon by the even-odd rule."""
    X, Y = np.meshgrid(np.arange(width, dtype=float), np.arange(height, dtype=float))
    parity = np.zeros((height, width), dtype=bool)
    for x1, y1, x2, y2 in _edges_of(vertices):
        if y1 == y2:
            continue
        crosses = (y1 > Y) != (y2 > Y)
        with np.errstate(divide="ignore", invalid="ignore"):
            xi = x1 + (Y - y1) * (x2 - x1) / (y2 - y1)
        parity ^= crosses & (X < xi)
    return parity


def _segment_hits_pixels(x1, y1, x2, y2, width, height) -> np.ndarray:
    """Boolean grid of pixels whose closed unit square the segment touches.

    Liang-Barsky clipping of the segment against each candidate pixel's
    [x-0.5, x+0.5] x [y-0.5, y+0.5] square.
    """
    out = np.zeros((height, width), dtype=bool)
    lo_x = max(0, int(np.ceil(min(x1, x2) - 0.5)))
    hi_x = min(width - 1, int(np.floor(max(x1, x2) + 0.5)))
    lo_y = max(0, int(np.ceil(min(y1, y2) - 0.5)))
    hi_y = min(height - 1, int(np.floor(max(y1, y2) + 0.5)))
    if lo_x > hi_x or lo_y > hi_y:
        return out
    px, py = np.meshgrid(np.arange(lo_x, hi_x + 1), np.arange(lo_y, hi_y + 1))
    px = px.astype(float)
    py = py.astype(float)
    dx, dy = x2 - x1, y2 - y1
    t0 = np.zeros_like(px)
    t1 = np.ones_like(px)
    feasible = np.ones_like(px, dtype=bool)
    for p, q_lo, q_hi in ((dx, px - 0.5 - x1, px + 0.5 - x1),
                          (dy, py - 0.5 - y1, py + 0.5 - y1)):
        if p == 0:
            feasible &= (q_lo <= 0) & (q_hi >= 0)
        else:
            ta, tb = q_lo / p, q_hi / p
            tmin = np.minimum(ta, tb)
            tmax = np.maximum(ta, tb)
            t0 = np.maximum(t0, tmin)
            t1 = np.minimum(t1, tmax)
    feasible &= t0 <= t1
    out[lo_y:hi_y + 1, lo_x:hi_x + 1] = feasible
    return out


def contour_to_mask(c: Contour, width: int, height: int) -> Mask:
    """Rasterize a closed contour: even-odd interior plus boundary pixels.

    A pixel belongs to the mask when its center lies inside the polygon
    (even-odd rule) or the polygon boundary passes through its closed unit
    square.
    """
    inside = _even_odd_inside(c.vertices, width, height)
    for x1, y1, x2, y2 in _edges_of(c.vertices):
        inside |= _segment_hits_pixels(x1, y1, x2, y2, width, height)
    return Mask(inside)


def mask_center(m: Mask) -> Tuple[int, int]:
    """Centroid of set pixels, rounded to the nearest pixel."""
    ys, xs = np.nonzero(m.bits)
    if ys.size == 0:
        raise ValueError("empty mask")
    return int(np.floor(xs.mean() + 0.5)), int(np.floor(ys.mean() + 0.5))


def _disk(radius: int) -> np.ndarray:
    d = np.arange(-radius, radius + 1)
    return (d[:, None] ** 2 + d[None, :] ** 2) <= radius * radius


def dilate_mask(m: Mask, radius: int) -> Mask:
    """Morphological dilation with a disk structuring element."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    if not m.bits.any():
        return Mask(m.bits.copy())
    return Mask(ndimage.binary_dilation(m.bits, structure=_disk(int(radius))))


def _boundary_pixels(bits: np.ndarray) -> np.ndarray:
    """Set pixels 8-adjacent to the outside (image border counts as outside)."""
    eroded = ndimage.binary_erosion(bits, structure=np.ones((3, 3), dtype=bool),
                                    border_value=0)
    ys, xs = np.nonzero(bits & ~eroded)
    return np.stack([xs, ys], axis=1)


def extreme_points(m: Mask) -> Tuple[Tuple[int, int], Tuple[int, int]]:
    """The pair of boundary pixels at maximum Euclidean separation.

    Ties resolve to the pair whose first point (then second) comes first in
    row-major order. Only the 8-connected boundary is scanned, so cost is
    quadratic in the boundary length, not the area.
    """
    if m.count() < 2:
        raise ValueError("mask needs at least 2 pixels")
    pts = _boundary_pixels(m.bits)
    # row-major order: nonzero already yields y-then-x sorted coordinates
    diff = pts[:, None, :] - pts[None, :, :]
    d2 = (diff ** 2).sum(axis=2)
    iu = np.triu_indices(len(pts), k=1)
    best = d2[iu].max()
    hits = np.nonzero(d2[iu] == best)[0]
    i, j = iu[0][hits[0]], iu[1][hits[0]]
    return (int(pts[i, 0]), int(pts[i, 1])), (int(pts[j, 0]), int(pts[j, 1]))
