"""16-bit and 8-bit binary PGM serialization for depth images and masks.

Depth is stored in millimeters (maxval 65535, big-endian, 0 = missing);
masks store 0/255.
"""

from __future__ import annotations

import numpy as np

from .contours import Mask
from .geometry import DepthImage


class PgmFormatError(ValueError):
    pass


def _read_header(data: bytes):
    # magic, width, height, maxval as whitespace-separated tokens, with
    # '#' comments allowed between them
    tokens = []
    pos = 0
    while len(tokens) < 4:
        if pos >= len(data):
            raise PgmFormatError("truncated PGM header")
        ch = data[pos:pos + 1]
        if ch == b"#":
            nl = data.find(b"\n", pos)
            pos = len(data) if nl < 0 else nl + 1
        elif ch.isspace():
            pos += 1
        else:
            end = pos
            while end < len(data) and not data[end:end + 1].isspace():
                end += 1
            tokens.append(data[pos:end])
            pos = end
    pos += 1  # single whitespace after maxval
    if tokens[0] != b"P5":
        raise PgmFormatError(f"not a binary PGM: magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise PgmFormatError("non-integer PGM header field") from None
    if width <= 0 or height <= 0 or not (0 < maxval < 65536):
        raise PgmFormatError("bad PGM dimensions or maxval")
    return width, height, maxval, pos


def _read_pixels(data: bytes, path_hint: str = ""):
    width, height, maxval, pos = _read_header(data)
    dtype = np.dtype(">u2") if maxval > 255 else np.dtype("u1")
    need = width * height * dtype.itemsize
    payload = data[pos:pos + need]
    if len(payload) < need:
        raise PgmFormatError(f"PGM payload truncated{path_hint}")
    pixels = np.frombuffer(payload, dtype=dtype).reshape(height, width)
    return pixels, maxval


def save_depth_pgm(img: DepthImage, path) -> None:
    """Write depth as 16-bit PGM, meters rounded to millimeters, 0 = invalid."""
    mm = np.round(img.data * 1000.0)
    mm[~img.valid_mask] = 0
    mm = np.clip(mm, 0, 65535).astype(">u2")
    header = f"P5\n{img.width} {img.height}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + mm.tobytes())


def load_depth_pgm(path) -> DepthImage:
    with open(path, "rb") as fh:
        data = fh.read()
    pixels, maxval = _read_pixels(data, f" in {path}")
    if maxval <= 255:
        raise PgmFormatError(f"{path}: depth PGM must be 16-bit")
    return DepthImage.from_array(pixels.astype(np.float64) / 1000.0)


def save_mask_pgm(mask: Mask, path) -> None:
    """Write a mask as 8-bit PGM with values 0/255."""
    pixels = np.where(mask.bits, 255, 0).astype("u1")
    header = f"P5\n{mask.width} {mask.height}\n255\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + pixels.tobytes())


def load_mask_pgm(path) -> Mask:
    with open(path, "rb") as fh:
        data = fh.read()
    pixels, _ = _read_pixels(data, f" in {path}")
    return Mask(pixels > 0)


def save_map_pgm(values: np.ndarray, path, scale_max: float) -> None:
    """Write a float response map as 16-bit PGM on a fixed [0, scale_max] scale."""
    if scale_max <= 0:
        raise ValueError("scale_max must be positive")
    v = np.clip(np.asarray(values, dtype=np.float64) / scale_max, 0.0, 1.0)
    pixels = np.round(v * 65535.0).astype(">u2")
    header = f"P5\n{values.shape[1]} {values.shape[0]}\n65535\n".encode("ascii")
    with open(path, "wb") as fh:
        fh.write(header + pixels.tobytes())
