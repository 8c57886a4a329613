"""Deterministic synthetic garment scenes for training and benchmarks.

Each scene is a flat table seen from straight above with a single garment
on it. The garment is a class-specific silhouette (pant, shirt, t-shirt)
raised a couple of centimeters above the table. Its key part is a
semicircular opening notch on the top edge: the silhouette is cut out, a
recessed back panel (with fine puckering ripples) shows through the
opening, and a raised rim runs along the arc, the way a waistband or
collar rolls up. Fold ridges run outward from the two rim endpoints,
which are also the ground-truth grasp points. Sinusoidal wrinkles and
smooth sensor noise cover the rest of the cloth.

Everything is a pure function of the spec, including its rng seed.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy import ndimage

from .annotations import AnnotationRecord
from .contours import Mask
from .descriptors import GarmentLabel
from .geometry import DepthImage

GARMENT_CLASSES = ("pant", "shirt", "tshirt")

CLASS_LABELS = {
    "pant": GarmentLabel.WAIST_PANT,
    "shirt": GarmentLabel.NECK_SHIRT,
    "tshirt": GarmentLabel.NECK_TSHIRT,
}

# per-class notch geometry, in fractions of the garment width
_NOTCH_RADIUS = {"pant": 0.125, "shirt": 0.105, "tshirt": 0.115}
_RIM_SIGMA = {"pant": 2.9, "shirt": 2.5, "tshirt": 2.7}
_PANEL_DROP = {"pant": 0.015, "shirt": 0.0135, "tshirt": 0.0145}
# texture frequencies are the classes' strongest descriptor signature; they
# shape normal-angle statistics without changing the ring the contour traces
_RIM_MODULATION_WAVELENGTH = {"pant": 4.5, "shirt": 10.5, "tshirt": 7.0}
_RIM_MODULATION_DEPTH = {"pant": 0.35, "shirt": 0.12, "tshirt": 0.24}
_RIPPLE_WAVELENGTHS = {"pant": (4.5, 7.0), "shirt": (10.0, 15.0), "tshirt": (6.5, 10.0)}
_RIPPLE_AMPLITUDES = {"pant": (0.0028, 0.0023), "shirt": (0.0013, 0.0010), "tshirt": (0.0020, 0.0016)}
# waistbands roll up strongly at the corners (graspable bumps on the rim);
# collars instead shed folds outward over the shoulders
_END_BOOST = {"pant": 0.55, "shirt": 0.15, "tshirt": 0.15}
_FOLD_AMPLITUDE = {"pant": 0.009, "shirt": 0.016, "tshirt": 0.016}


@dataclass
class SyntheticSceneSpec:
    """Parameters of one generated scene."""

    garment_class: str
    seed: int
    width: int = 200
    height: int = 150
    table_depth: float = 1.30
    wrinkle_count: int = 3
    wrinkle_amplitude: float = 0.0035
    wrinkle_wavelength: float = 21.0
    cloth_thickness: float = 0.018
    noise_amplitude: float = 0.0006

    def __post_init__(self):
        if self.garment_class not in GARMENT_CLASSES:
            raise ValueError(f"unknown garment class {self.garment_class!r}")
        if self.wrinkle_amplitude <= 0:
            raise ValueError("wrinkle amplitude must be positive")
        if self.wrinkle_wavelength <= 2:
            raise ValueError("wrinkle wavelength must exceed 2 px")
        if self.table_depth <= 0 or self.cloth_thickness <= 0:
            raise ValueError("depths must be positive")

    @property
    def image_id(self) -> str:
        return f"{self.garment_class}-{self.seed:05d}"


def _capsule(x, y, p0, p1, half_width):
    """Boolean field: distance to segment p0-p1 <= half_width."""
    px, py = p0
    qx, qy = p1
    dx, dy = qx - px, qy - py
    len2 = dx * dx + dy * dy
    if len2 == 0:
        t = np.zeros_like(x)
    else:
        t = np.clip(((x - px) * dx + (y - py) * dy) / len2, 0.0, 1.0)
    cx = px + t * dx
    cy = py + t * dy
    return np.hypot(x - cx, y - cy) <= half_width


def _silhouette(spec: SyntheticSceneSpec, rng, x, y):
    """Garment silhouette (before the notch cutout) plus layout anchors."""
    w, h = spec.width, spec.height
    gw = 0.62 * w * rng.uniform(0.97, 1.03)
    gh = 0.72 * h * rng.uniform(0.97, 1.03)
    cx = w / 2.0 + rng.uniform(-3, 3)
    cy = h / 2.0 + rng.uniform(-2, 2)
    x0, x1 = cx - gw / 2, cx + gw / 2
    y0, y1 = cy - gh / 2, cy + gh / 2

    # silhouettes are deliberately coarse and free of concave junctions:
    # concavities read as opening-like geometry and pollute recognition
    cls = spec.garment_class
    if cls == "pant":
        # trapezoid, waistband wider than the cuffs
        taper = 0.12 * gw * (y - y0) / gh
        body = (np.abs(x - cx) <= gw / 2 - taper) & (y >= y0) & (y <= y1)
    elif cls == "shirt":
        # torso with straight shoulder slopes (folded-in long sleeves)
        slope = np.clip((y - y0) / (0.30 * gh), 0.0, 1.0)
        half = 0.30 * gw + 0.14 * gw * slope
        body = (np.abs(x - cx) <= half) & (y >= y0) & (y <= y1)
    else:
        # t-shirt: wide shoulder line tapering toward the hem
        slope = np.clip((y - y0) / (0.22 * gh), 0.0, 1.0)
        half = 0.42 * gw - 0.10 * gw * np.clip((y - y0) / gh, 0, 1)
        body = (np.abs(x - cx) <= half) & (y >= y0) & (y <= y1)
    return body, (cx, y0, gw)


def _arc_geometry(x, y, ncx, ncy, radius):
    """Distance to the lower semicircular arc and the angular position."""
    r = np.hypot(x - ncx, y - ncy)
    ang = np.arctan2(y - ncy, x - ncx)  # 0..pi is the lower half (y down)
    on_arc = ang >= 0
    d_arc = np.abs(r - radius)
    # above the diameter, measure to the nearest endpoint instead
    d_end = np.minimum(np.hypot(x - (ncx - radius), y - ncy),
                       np.hypot(x - (ncx + radius), y - ncy))
    return np.where(on_arc, d_arc, d_end), ang, r


def _traced_polygon(depth, notch_center, radius, rim_sigma, w, h):
    """Key-part polygon traced on the rendered depth, the way an annotator
    follows the visible opening contour.

    The trace runs the package's own adaptive contour seeded at the
    opening centroid; it falls back to the geometric opening circle when
    the trace degenerates.
    """
    from .contours import SnakeParams, contour_to_mask, evolve_snake

    ncx, ncy = notch_center
    seed = (int(round(ncx)), int(round(ncy + 0.45 * radius)))
    poly = None
    try:
        contour = evolve_snake(depth, seed, SnakeParams())
        mask = contour_to_mask(contour, w, h)
        if mask.count() >= 80:
            verts = contour.vertices[::4]
            poly = [(int(np.clip(round(px_), 0, w - 1)),
                     int(np.clip(round(py_), 0, h - 1))) for px_, py_ in verts]
    except ValueError:
        poly = None
    if poly is None or len(set(poly)) < 3:
        angles = np.linspace(0.0, np.pi, 13)
        poly = [(ncx + radius * np.cos(a), ncy + radius * np.sin(a)) for a in angles]
        poly.append((ncx - radius, ncy))
        poly = [(int(np.clip(round(px_), 0, w - 1)),
                 int(np.clip(round(py_), 0, h - 1))) for px_, py_ in poly]
    return poly


def generate_scene(spec: SyntheticSceneSpec) -> Tuple[DepthImage, AnnotationRecord, Mask]:
    """Render a scene; returns (depth image, annotation, garment mask)."""
    rng = np.random.default_rng(spec.seed)
    w, h = spec.width, spec.height
    y, x = np.mgrid[0:h, 0:w].astype(float)

    body, (cx, y_top, gw) = _silhouette(spec, rng, x, y)
    cls = spec.garment_class
    radius = _NOTCH_RADIUS[cls] * gw * rng.uniform(0.96, 1.04)
    rim_sigma = _RIM_SIGMA[cls]
    ncx = cx + rng.uniform(-2, 2)
    ncy = y_top

    d_arc, ang, r = _arc_geometry(x, y, ncx, ncy, radius)
    opening = (r < radius - 0.5 * rim_sigma) & (ang >= 0)
    silhouette = body & ~opening

    # cloth plateau with softened edges
    edge_dist = ndimage.distance_transform_edt(silhouette)
    height_field = spec.cloth_thickness * np.clip(edge_dist / 4.0, 0.0, 1.0)

    # recessed back panel visible through the opening, with isotropic
    # puckering ripples that make the notch interior the entropy hotspot
    panel = body & opening
    panel_h = spec.cloth_thickness - _PANEL_DROP[cls]
    lam_a, lam_b = _RIPPLE_WAVELENGTHS[cls]
    lam_a *= rng.uniform(0.93, 1.07)
    lam_b *= rng.uniform(0.93, 1.07)
    amp_a, amp_b = _RIPPLE_AMPLITUDES[cls]
    ripple = amp_a * np.cos(2 * np.pi * r / lam_a + rng.uniform(0, 2 * np.pi)) \
        * np.cos(2.0 * ang + rng.uniform(0, 2 * np.pi))
    ripple += amp_b * np.cos(2 * np.pi * r / lam_b + rng.uniform(0, 2 * np.pi)) \
        * np.cos(3.0 * ang + rng.uniform(0, 2 * np.pi))
    # puckering is strongest mid-opening; the rim ring visible all around the
    # window is what makes the opening the entropy hotspot
    ripple *= np.exp(-np.square(np.hypot(x - ncx, y - (ncy + 0.40 * radius))) /
                     (2 * (0.60 * radius) ** 2))
    height_field = np.where(panel, np.maximum(panel_h + ripple, 0.0), height_field)

    # rim: raised tube along the arc with along-arc modulation and stronger
    # bumps at both endpoints (they anchor the grasp-point candidates)
    rim_amp = 0.015
    modulation = 1.0 + _RIM_MODULATION_DEPTH[cls] * np.cos(
        ang * (2 * np.pi * radius / _RIM_MODULATION_WAVELENGTH[cls]))
    end_arc_dist = np.minimum(np.abs(ang) * radius,
                              np.abs(np.pi - np.abs(ang)) * radius)
    end_boost = 1.0 + _END_BOOST[cls] * np.exp(-np.square(end_arc_dist) / (2 * 4.0 ** 2))
    rim = rim_amp * np.exp(-np.square(d_arc) / (2 * rim_sigma ** 2)) * modulation * end_boost
    rim = np.where(body, rim, 0.0)
    height_field += rim

    # fold ridges running outward from the endpoints (outside the rim), the
    # way cloth bunches when pulled at the corners
    p_left = (ncx - radius, ncy)
    p_right = (ncx + radius, ncy)
    for (ex, ey), side in ((p_left, -1), (p_right, 1)):
        # a flat gap separates the fold from the rim so the key-part contour
        # cuts between them, leaving the fold crest in the dilation ring
        seg0 = (ex + side * (rim_sigma + 4.5), ey + 1.0)
        seg1 = (ex + side * (rim_sigma + 12.5), ey + 4.5)
        t = np.clip(((x - seg0[0]) * (seg1[0] - seg0[0]) +
                     (y - seg0[1]) * (seg1[1] - seg0[1])) /
                    ((seg1[0] - seg0[0]) ** 2 + (seg1[1] - seg0[1]) ** 2), 0, 1)
        px_, py_ = seg0[0] + t * (seg1[0] - seg0[0]), seg0[1] + t * (seg1[1] - seg0[1])
        perp = np.hypot(x - px_, y - py_)
        # crest sits a few px beyond the rim so it lands in the dilation ring
        along_taper = np.exp(-np.square(t - 0.25) / (2 * 0.25 ** 2))
        fold = _FOLD_AMPLITUDE[cls] * np.exp(-np.square(perp) / (2 * 2.2 ** 2)) * along_taper
        height_field += np.where(silhouette, fold, 0.0)

    # garment-wide sinusoidal wrinkles in a narrow direction fan (cloth
    # dragged across a table folds near-parallel), kept away from the notch
    wrinkle = np.zeros_like(x)
    base_theta = rng.uniform(0, np.pi)
    for _ in range(spec.wrinkle_count):
        theta = base_theta + rng.uniform(-0.35, 0.35)
        lam = spec.wrinkle_wavelength * rng.uniform(0.8, 1.25)
        phase = rng.uniform(0, 2 * np.pi)
        amp = spec.wrinkle_amplitude * rng.uniform(0.6, 1.0)
        wave = amp * 0.5 * (1 + np.sin(2 * np.pi * (x * np.cos(theta) + y * np.sin(theta)) / lam + phase))
        wrinkle += wave
    interior_taper = np.clip(edge_dist / 6.0, 0.0, 1.0)
    notch_guard = 1.0 - np.exp(-np.square(np.maximum(d_arc - rim_sigma, 0.0)) / (2 * 12.0 ** 2))
    height_field += wrinkle * interior_taper * notch_guard

    # smooth sensor-like noise everywhere
    noise = ndimage.gaussian_filter(rng.standard_normal((h, w)), 2.0)
    noise *= spec.noise_amplitude / max(noise.std(), 1e-12)
    height_field = np.maximum(height_field + noise, 0.0)

    depth = DepthImage.from_array(spec.table_depth - height_field)

    grasp = [(int(round(p_left[0])), int(round(p_left[1]))),
             (int(round(p_right[0])), int(round(p_right[1])))]

    poly = _traced_polygon(depth, (ncx, ncy), radius, rim_sigma, w, h)

    record = AnnotationRecord(
        image_id=spec.image_id,
        key_part_polygon=poly,
        key_part_label=CLASS_LABELS[cls],
        grasp_points=grasp,
        garment_mask_path=f"{spec.image_id}_mask.pgm",
    )
    return depth, record, Mask(silhouette)
