"""Line-oriented annotation records for training and evaluation.

File grammar (one record per line after the header)::

    grasp-annot v1
    <id> | <label> | x0,y0 x1,y1 ... | gx0,gy0[;gx1,gy1] | <maskpath>

Polygons need at least 3 vertices; 1 or 2 grasp points are allowed.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import List, Tuple

from .descriptors import GarmentLabel

ANNOTATION_HEADER = "grasp-annot v1"


class AnnotationError(ValueError):
    """Schema violation; carries the 1-based line number."""

    def __init__(self, message: str, line: int):
        super().__init__(f"line {line}: {message}")
        self.line = line


@dataclass
class AnnotationRecord:
    image_id: str
    key_part_polygon: List[Tuple[int, int]]
    key_part_label: GarmentLabel
    grasp_points: List[Tuple[int, int]]
    garment_mask_path: str = ""

    def __post_init__(self):
        self.key_part_polygon = [(int(x), int(y)) for x, y in self.key_part_polygon]
        self.grasp_points = [(int(x), int(y)) for x, y in self.grasp_points]
        self.key_part_label = GarmentLabel(self.key_part_label)
        if len(self.key_part_polygon) < 3:
            raise ValueError("polygon needs at least 3 vertices")
        if not 1 <= len(self.grasp_points) <= 2:
            raise ValueError("expected 1 or 2 grasp points")
        if "|" in self.image_id or "|" in self.garment_mask_path:
            raise ValueError("'|' is reserved as the field separator")


def _parse_pair(tok: str, line: int, what: str) -> Tuple[int, int]:
    parts = tok.split(",")
    if len(parts) != 2:
        raise AnnotationError(f"bad {what} {tok!r}", line)
    try:
        return int(parts[0]), int(parts[1])
    except ValueError:
        raise AnnotationError(f"non-integer {what} {tok!r}", line) from None


def load_annotations(path) -> List[AnnotationRecord]:
    with open(path, "r", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines or lines[0].strip() != ANNOTATION_HEADER:
        raise AnnotationError(f"expected header {ANNOTATION_HEADER!r}", 1)
    records = []
    for n, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = [f.strip() for f in line.split("|")]
        if len(fields) != 5:
            raise AnnotationError(f"expected 5 '|'-separated fields, got {len(fields)}", n)
        image_id, label_s, poly_s, grasp_s, mask_path = fields
        try:
            label = GarmentLabel(label_s)
        except ValueError:
            raise AnnotationError(f"unknown label {label_s!r}", n) from None
        polygon = [_parse_pair(tok, n, "polygon vertex") for tok in poly_s.split()]
        if len(polygon) < 3:
            raise AnnotationError(f"polygon has {len(polygon)} vertices, need >= 3", n)
        grasp_tokens = [t for t in grasp_s.split(";") if t.strip()]
        if not 1 <= len(grasp_tokens) <= 2:
            raise AnnotationError(f"expected 1 or 2 grasp points, got {len(grasp_tokens)}", n)
        grasp = [_parse_pair(tok.strip(), n, "grasp point") for tok in grasp_tokens]
        try:
            records.append(AnnotationRecord(image_id=image_id,
                                            key_part_polygon=polygon,
                                            key_part_label=label,
                                            grasp_points=grasp,
                                            garment_mask_path=mask_path))
        except ValueError as exc:
            raise AnnotationError(str(exc), n) from None
    return records


def save_annotations(records, path) -> None:
    lines = [ANNOTATION_HEADER]
    for r in records:
        poly = " ".join(f"{x},{y}" for x, y in r.key_part_polygon)
        grasp = ";".join(f"{x},{y}" for x, y in r.grasp_points)
        lines.append(f"{r.image_id} | {r.key_part_label.value} | {poly} | "
                     f"{grasp} | {r.garment_mask_path}")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")
