"""Binary portable-pixmap I/O.

Images travel as P6 (3x8-bit RGB), masks and error maps as P5 (8-bit gray)
with the pixel value equal to the class id.  Round trips are bit-exact.
"""
from __future__ import annotations

import numpy as np

from .errors import RasterError

# Rendering palette for class-id masks: sand, coral, algae, rock.
PALETTE = np.array(
    [(210, 180, 140), (220, 70, 70), (70, 170, 80), (128, 128, 128)],
    dtype=np.uint8,
)


def _write_pnm(path, magic: bytes, arr: np.ndarray) -> None:
    h, w = arr.shape[:2]
    with open(path, "wb") as fh:
        fh.write(magic + b"\n%d %d\n255\n" % (w, h))
        fh.write(arr.astype(np.uint8).tobytes())


def _parse_header(data: bytes, path) -> tuple[bytes, int, int, int]:
    """Returns (magic, width, height, payload offset)."""
    if len(data) < 2 or data[:1] != b"P":
        raise RasterError(f"{path}: not a PNM file (bad magic at byte 0)")
    magic = data[:2]
    pos = 2
    fields: list[int] = []
    while len(fields) < 3:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise RasterError(f"{path}: malformed header field at byte {pos}")
        fields.append(int(data[start:pos]))
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise RasterError(f"{path}: missing whitespace after maxval at byte {pos}")
    pos += 1
    width, height, maxval = fields
    if maxval != 255:
        raise RasterError(f"{path}: unsupported maxval {maxval} (need 255)")
    if width <= 0 or height <= 0:
        raise RasterError(f"{path}: non-positive extents {width}x{height}")
    return magic, width, height, pos


def _read_pnm(path, expect_magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as fh:
        data = fh.read()
    magic, width, height, pos = _parse_header(data, path)
    if magic != expect_magic:
        raise RasterError(f"{path}: expected {expect_magic.decode()} file, found {magic.decode()} at byte 0")
    expected = width * height * channels
    payload = data[pos : pos + expected]
    if len(payload) != expected:
        raise RasterError(
            f"{path}: payload truncated at byte {pos + len(payload)} "
            f"(expected {expected} bytes from byte {pos})"
        )
    arr = np.frombuffer(payload, dtype=np.uint8)
    shape = (height, width, channels) if channels > 1 else (height, width)
    return arr.reshape(shape).copy()


def write_image(path, pixels: np.ndarray) -> None:
    if pixels.ndim != 3 or pixels.shape[2] != 3:
        raise RasterError(f"image must be HxWx3, got {pixels.shape}")
    _write_pnm(path, b"P6", pixels)


def read_image(path) -> np.ndarray:
    return _read_pnm(path, b"P6", 3)


def write_mask(path, labels: np.ndarray) -> None:
    if labels.ndim != 2:
        raise RasterError(f"mask must be HxW, got {labels.shape}")
    _write_pnm(path, b"P5", labels)


def read_mask(path, num_classes: int = 4) -> np.ndarray:
    mask = _read_pnm(path, b"P5", 1)
    top = int(mask.max())
    if top >= num_classes:
        raise RasterError(f"{path}: mask label {top} out of range for {num_classes} classes")
    return mask


def write_gray(path, values: np.ndarray) -> None:
    """P5 writer without class validation (error maps, debug rasters)."""
    if values.ndim != 2:
        raise RasterError(f"gray raster must be HxW, got {values.shape}")
    _write_pnm(path, b"P5", values)


def render_mask(mask: np.ndarray, palette: np.ndarray = PALETTE) -> np.ndarray:
    """Class-id raster -> RGB visualization via the palette."""
    if int(mask.max(initial=0)) >= palette.shape[0]:
        raise RasterError(f"mask label {int(mask.max())} outside palette of {palette.shape[0]} entries")
    return palette[mask]
