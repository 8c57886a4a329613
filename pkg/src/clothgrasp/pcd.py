"""Reader and writer for PCD 0.7 point-cloud files (ascii and binary).

Parsing is strict: malformed headers, unsupported versions or data modes,
field/size mismatches, and truncated payloads each raise a distinct
:class:`PcdParseError` carrying the byte offset of the problem.
"""

from __future__ import annotations

from typing import Dict, List, Tuple

import numpy as np

from .geometry import PointCloud

_HEADER_KEYS = ("VERSION", "FIELDS", "SIZE", "TYPE", "COUNT", "WIDTH",
                "HEIGHT", "VIEWPOINT", "POINTS", "DATA")

_PCD_TO_NUMPY = {
    ("F", 4): np.float32, ("F", 8): np.float64,
    ("I", 1): np.int8, ("I", 2): np.int16, ("I", 4): np.int32, ("I", 8): np.int64,
    ("U", 1): np.uint8, ("U", 2): np.uint16, ("U", 4): np.uint32, ("U", 8): np.uint64,
}


class PcdParseError(ValueError):
    """PCD parse failure with a machine-readable kind and byte offset.

    Kinds: ``malformed-header``, ``unsupported-version``,
    ``unsupported-data``, ``field-mismatch``, ``truncated``,
    ``malformed-data``.
    """

    def __init__(self, kind: str, message: str, offset: int):
        super().__init__(f"{message} (at byte {offset})")
        self.kind = kind
        self.offset = offset


def _parse_header(data: bytes) -> Tuple[Dict, int]:
    """Parse header lines up to and including DATA; returns (meta, body offset)."""
    meta: Dict = {}
    pos = 0
    while pos < len(data):
        end = data.find(b"\n", pos)
        if end < 0:
            raise PcdParseError("malformed-header", "header ended without DATA line", pos)
        raw = data[pos:end]
        line_offset = pos
        pos = end + 1
        try:
            line = raw.decode("ascii").strip()
        except UnicodeDecodeError:
            raise PcdParseError("malformed-header", "non-ascii header line",
                                line_offset) from None
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        key = parts[0].upper()
        if key not in _HEADER_KEYS:
            raise PcdParseError("malformed-header", f"unknown header key {parts[0]!r}",
                                line_offset)
        meta[key] = (parts[1:], line_offset)
        if key == "DATA":
            break
    else:
        raise PcdParseError("malformed-header", "header ended without DATA line", pos)

    for key in _HEADER_KEYS:
        if key == "COUNT":
            continue  # optional, defaults to all-ones
        if key not in meta:
            raise PcdParseError("malformed-header", f"missing header key {key}", 0)
    return meta, pos


def _ints(meta, key) -> List[int]:
    vals, off = meta[key]
    try:
        return [int(v) for v in vals]
    except ValueError:
        raise PcdParseError("malformed-header", f"bad integer in {key}", off) from None


def parse_pcd(data: bytes) -> PointCloud:
    """Parse PCD 0.7 bytes into a PointCloud.

    Supports DATA ascii and binary (not binary_compressed). Requires x, y,
    z fields of TYPE F with COUNT 1. Organized clouds (HEIGHT > 1) keep
    their (width, height); the VIEWPOINT translation becomes the cloud
    viewpoint. NaN coordinates are flagged invalid and zeroed.
    """
    meta, body = _parse_header(data)

    version, voff = meta["VERSION"]
    if len(version) != 1 or version[0] not in ("0.7", ".7", "0.7\r"):
        raise PcdParseError("unsupported-version",
                            f"unsupported PCD version {' '.join(version)!r}", voff)

    fields, foff = meta["FIELDS"]
    sizes = _ints(meta, "SIZE")
    types, _ = meta["TYPE"]
    counts = _ints(meta, "COUNT") if "COUNT" in meta else [1] * len(fields)
    if not (len(fields) == len(sizes) == len(types) == len(counts)):
        raise PcdParseError("field-mismatch",
                            "FIELDS/SIZE/TYPE/COUNT lengths disagree", foff)
    for f in ("x", "y", "z"):
        if f not in fields:
            raise PcdParseError("field-mismatch", f"missing field {f!r}", foff)
        i = fields.index(f)
        if types[i] != "F" or counts[i] != 1:
            raise PcdParseError("field-mismatch",
                                f"field {f!r} must be TYPE F COUNT 1", foff)

    width = _ints(meta, "WIDTH")[0]
    height = _ints(meta, "HEIGHT")[0]
    points = _ints(meta, "POINTS")[0]
    if width * height != points or points < 0:
        raise PcdParseError("malformed-header",
                            f"WIDTH*HEIGHT = {width * height} != POINTS = {points}",
                            meta["POINTS"][1])

    vp_vals, vp_off = meta["VIEWPOINT"]
    try:
        vp = [float(v) for v in vp_vals]
    except ValueError:
        raise PcdParseError("malformed-header", "bad VIEWPOINT", vp_off) from None
    if len(vp) != 7:
        raise PcdParseError("malformed-header", "VIEWPOINT needs 7 numbers", vp_off)
    viewpoint = np.array(vp[:3])

    mode, moff = meta["DATA"]
    mode = mode[0].lower() if mode else ""
    if mode not in ("ascii", "binary"):
        raise PcdParseError("unsupported-data", f"unsupported DATA mode {mode!r}", moff)

    # column layout of the flattened record
    column = {}
    col = 0
    for f, c in zip(fields, counts):
        column[f] = col
        col += c
    total_cols = col

    if mode == "ascii":
        xyz, valid = _parse_ascii(data, body, points, total_cols, column)
    else:
        xyz, valid = _parse_binary(data, body, points, fields, sizes, types,
                                   counts, column)

    nan = ~np.isfinite(xyz).all(axis=1)
    valid = valid & ~nan
    xyz[nan] = 0.0
    organized = (width, height) if height > 1 else None
    return PointCloud(points=xyz, valid=valid, organized_shape=organized,
                      viewpoint=viewpoint)


def _parse_ascii(data, body, points, total_cols, column):
    xyz = np.zeros((points, 3))
    valid = np.ones(points, dtype=bool)
    pos = body
    for row in range(points):
        if pos >= len(data):
            raise PcdParseError("truncated",
                                f"expected {points} rows, data ended after {row}", pos)
        end = data.find(b"\n", pos)
        if end < 0:
            end = len(data)
        line = data[pos:end].decode("ascii", errors="replace").strip()
        row_offset = pos
        pos = end + 1
        if not line:
            raise PcdParseError("truncated",
                                f"expected {points} rows, data ended after {row}",
                                row_offset)
        tokens = line.split()
        if len(tokens) != total_cols:
            raise PcdParseError("malformed-data",
                                f"row {row} has {len(tokens)} columns, "
                                f"expected {total_cols}", row_offset)
        try:
            vals = [float(tokens[column[f]]) for f in ("x", "y", "z")]
        except ValueError:
            raise PcdParseError("malformed-data", f"unparseable number in row {row}",
                                row_offset) from None
        xyz[row] = vals
    return xyz, valid


def _parse_binary(data, body, points, fields, sizes, types, counts, column):
    dtype_fields = []
    for f, s, t, c in zip(fields, sizes, types, counts):
        key = (t, s)
        if key not in _PCD_TO_NUMPY:
            raise PcdParseError("field-mismatch",
                                f"unsupported TYPE/SIZE {t}{s} for field {f!r}", body)
        base = _PCD_TO_NUMPY[key]
        for k in range(c):
            name = f if c == 1 else f"{f}_{k}"
            dtype_fields.append((name, base))
    dtype = np.dtype(dtype_fields)
    need = points * dtype.itemsize
    have = len(data) - body
    if have < need:
        raise PcdParseError("truncated",
                            f"binary payload holds {have} bytes, need {need}",
                            body + max(have, 0))
    rec = np.frombuffer(data, dtype=dtype, count=points, offset=body)
    xyz = np.stack([rec["x"].astype(np.float64),
                    rec["y"].astype(np.float64),
                    rec["z"].astype(np.float64)], axis=1)
    return xyz, np.ones(points, dtype=bool)


def write_pcd(cloud: PointCloud, data: str = "ascii") -> bytes:
    """Serialize a cloud with x/y/z float32 fields.

    Invalid points are written as NaN rows, so parse -> write round-trips
    byte-exactly in both modes.
    """
    if data not in ("ascii", "binary"):
        raise ValueError("data mode must be 'ascii' or 'binary'")
    pts = cloud.points.astype(np.float32)
    pts = np.where(cloud.valid[:, None], pts, np.float32(np.nan))
    if cloud.organized_shape is not None:
        width, height = cloud.organized_shape
    else:
        width, height = len(cloud), 1
    vp = " ".join(_fmt(v) for v in cloud.viewpoint) + " 1 0 0 0"
    header = (
        "# .PCD v0.7 - Point Cloud Data file format\n"
        "VERSION 0.7\n"
        "FIELDS x y z\n"
        "SIZE 4 4 4\n"
        "TYPE F F F\n"
        "COUNT 1 1 1\n"
        f"WIDTH {width}\n"
        f"HEIGHT {height}\n"
        f"VIEWPOINT {vp}\n"
        f"POINTS {len(cloud)}\n"
        f"DATA {data}\n"
    ).encode("ascii")
    if data == "binary":
        return header + pts.tobytes()
    rows = "\n".join(" ".join(_fmt32(v) for v in row) for row in pts)
    return header + rows.encode("ascii") + (b"\n" if len(cloud) else b"")


def _fmt(v: float) -> str:
    return repr(float(v))


def _fmt32(v: np.float32) -> str:
    # str() of a float32 scalar is the shortest digit string that
    # round-trips its exact value
    if np.isnan(v):
        return "nan"
    return str(np.float32(v))
