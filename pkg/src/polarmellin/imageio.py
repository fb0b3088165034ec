"""Readers and writers for the interchange formats.

* PGM: binary ``P5`` with maxval 255.
* PPM: binary ``P6`` with maxval 255, used for packed RGB frame dumps.
* F32 grid: ``b"FGRD"``, u32 LE width, u32 LE height, then width*height
  little-endian float32 values row-major.

All writers go through :func:`atomic_write`, so a crash mid-write never
leaves a truncated file under the final name.
"""

from __future__ import annotations

import os
import struct
import tempfile
from pathlib import Path

import numpy as np

from .errors import FormatError, InvalidInputError

F32_MAGIC = b"FGRD"
_WHITESPACE = b" \t\r\n\x0b\x0c"


def _umask() -> int:
    mask = os.umask(0)
    os.umask(mask)
    return mask


def atomic_write(path, data: bytes) -> None:
    """Write ``data`` to a temp file next to ``path`` then rename it over."""
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", suffix=".tmp", dir=path.parent or ".")
    try:
        # mkstemp creates 0600; give the result ordinary file permissions
        os.fchmod(fd, 0o666 & ~_umask())
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except FileNotFoundError:
            pass
        raise


def _read_bytes(path) -> bytes:
    try:
        return Path(path).read_bytes()
    except OSError as exc:
        raise FormatError(path, 0, f"cannot read file: {exc.strerror or exc}") from exc


def _netpbm_header(data: bytes, path, magic: bytes):
    """Parse ``magic width height maxval`` and return the values plus the
    offset of the first raster byte."""
    if data[:2] != magic:
        raise FormatError(path, 0, f"bad magic {data[:2]!r}, expected {magic!r}")
    pos = 2
    fields = []
    while len(fields) < 3:
        while pos < len(data) and data[pos] in _WHITESPACE:
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if start == pos:
            if pos >= len(data):
                raise FormatError(path, pos, "truncated header")
            raise FormatError(path, pos, f"unexpected byte {data[pos:pos + 1]!r} in header")
        fields.append(int(data[start:pos]))
    if pos >= len(data) or data[pos] not in _WHITESPACE:
        raise FormatError(path, pos, "header must end with a single whitespace byte")
    pos += 1
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise FormatError(path, 2, f"invalid dimensions {width}x{height}")
    if maxval != 255:
        raise FormatError(path, 2, f"unsupported maxval {maxval}; only 255 is handled")
    return width, height, pos


def read_pgm(path) -> np.ndarray:
    """Load a P5 file as a uint8 array of shape (height, width)."""
    data = _read_bytes(path)
    width, height, pos = _netpbm_header(data, path, b"P5")
    need = width * height
    if len(data) - pos < need:
        raise FormatError(
            path, len(data), f"truncated pixel data: expected {need} bytes after offset {pos}, got {len(data) - pos}"
        )
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width).copy()


def read_ppm(path) -> np.ndarray:
    """Load a P6 file as a uint8 array of shape (height, width, 3)."""
    data = _read_bytes(path)
    width, height, pos = _netpbm_header(data, path, b"P6")
    need = width * height * 3
    if len(data) - pos < need:
        raise FormatError(
            path, len(data), f"truncated pixel data: expected {need} bytes after offset {pos}, got {len(data) - pos}"
        )
    return np.frombuffer(data, dtype=np.uint8, count=need, offset=pos).reshape(height, width, 3).copy()


def encode_pgm(image) -> bytes:
    arr = np.asarray(image)
    if arr.ndim != 2 or arr.dtype != np.uint8:
        raise InvalidInputError(f"PGM needs a 2D uint8 array, got {arr.dtype} {arr.shape}")
    h, w = arr.shape
    return b"P5\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(arr).tobytes()


def encode_ppm(image) -> bytes:
    arr = np.asarray(image)
    if arr.ndim != 3 or arr.shape[2] != 3 or arr.dtype != np.uint8:
        raise InvalidInputError(f"PPM needs a (H, W, 3) uint8 array, got {arr.dtype} {arr.shape}")
    h, w, _ = arr.shape
    return b"P6\n%d %d\n255\n" % (w, h) + np.ascontiguousarray(arr).tobytes()


def write_pgm(path, image) -> None:
    atomic_write(path, encode_pgm(image))


def write_ppm(path, image) -> None:
    atomic_write(path, encode_ppm(image))


def encode_f32(grid) -> bytes:
    arr = np.asarray(grid)
    if arr.ndim != 2:
        raise InvalidInputError(f"F32 grid needs a 2D array, got shape {arr.shape}")
    h, w = arr.shape
    return F32_MAGIC + struct.pack("<II", w, h) + np.ascontiguousarray(arr, dtype="<f4").tobytes()


def read_f32(path) -> np.ndarray:
    """Load an F32 grid file as a float32 array of shape (height, width)."""
    data = _read_bytes(path)
    if len(data) < 4 or data[:4] != F32_MAGIC:
        raise FormatError(path, 0, f"bad magic {data[:4]!r}, expected {F32_MAGIC!r}")
    if len(data) < 12:
        raise FormatError(path, len(data), "truncated header")
    width, height = struct.unpack_from("<II", data, 4)
    need = width * height * 4
    if width < 1 or height < 1:
        raise FormatError(path, 4, f"invalid dimensions {width}x{height}")
    if len(data) - 12 < need:
        raise FormatError(
            path, len(data), f"truncated grid data: expected {need} bytes after offset 12, got {len(data) - 12}"
        )
    return np.frombuffer(data, dtype="<f4", count=width * height, offset=12).reshape(height, width).astype(np.float32)


def write_f32(path, grid) -> None:
    atomic_write(path, encode_f32(grid))


def read_grid(path) -> np.ndarray:
    """Load a PGM or F32 grid, choosing the reader from the file's magic."""
    data = _read_bytes(path)
    if data[:2] == b"P5":
        return read_pgm(path)
    if data[:4] == F32_MAGIC:
        return read_f32(path)
    raise FormatError(path, 0, f"unrecognized magic {data[:4]!r}; expected a P5 PGM or FGRD grid")


def to_uint8(grid) -> np.ndarray:
    """Max-normalize a non-negative grid to uint8 (all-zero stays zero)."""
    g = np.asarray(grid, dtype=np.float64)
    peak = g.max() if g.size else 0.0
    if peak <= 0:
        return np.zeros(g.shape, dtype=np.uint8)
    return np.clip(np.floor(np.clip(g, 0, None) * (255.0 / peak) + 0.5), 0, 255).astype(np.uint8)
