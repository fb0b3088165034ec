"""Log-polar transform through a precomputed remap table.

Every output pixel ``(theta_row, rho_col)`` of the log-polar image reads
exactly one input pixel, and which one depends only on the geometry. The
table is therefore built once (:func:`build_map`) and the transform itself
(:func:`apply_lpt`) is a pure gather with no arithmetic on pixel values.

Geometry
--------
Column ``i`` sits at ``rho = i * rho_step`` with
``rho_step = ln(r_max / r0) / (rho_size - 1)``, i.e. radius
``r = r0 * exp(rho)``. Row ``j`` sits at ``theta = j * 2*pi / theta_size``,
measured counterclockwise from +x with y pointing up, so the source pixel is
``(cx + r cos theta, cy - r sin theta)`` rounded half-up. Entries with
``r < r_dc`` (the DC block) or an out-of-grid source are invalid and read 0.
"""

from __future__ import annotations

import math
import os
import struct
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple

import numba
import numpy as np

from .errors import FormatError, InvalidInputError, InvalidParamsError
from .imageio import atomic_write

INSCRIBED = "inscribed"
CORNER = "corner"
R_MAX_MODES = (INSCRIBED, CORNER)
NEAREST = "nearest"

LPTM_MAGIC = b"LPTM"
LPTM_HEADER = struct.Struct("<4sIIII")
LPTM_RECORD = np.dtype([("x", "<u4"), ("y", "<u4"), ("valid", "u1")])


@dataclass(frozen=True)
class PmtParams:
    """Geometry of the transform. Defaults target a Full HD FT plane and a
    Full HD output (1920 rho columns by 1080 theta rows)."""

    in_width: int = 1920
    in_height: int = 1080
    rho_size: int = 1920
    theta_size: int = 1080
    r0: float = 1.0
    r_dc: float = 4.0
    r_max_mode: str = INSCRIBED
    interp: str = NEAREST

    def __post_init__(self):
        if self.in_width < 2 or self.in_height < 2:
            raise InvalidParamsError(f"input grid must be at least 2x2, got {self.in_width}x{self.in_height}")
        if self.rho_size < 2 or self.theta_size < 2:
            raise InvalidParamsError(f"rho_size and theta_size must be >= 2, got {self.rho_size}, {self.theta_size}")
        if not self.r0 > 0:
            raise InvalidParamsError(f"r0 must be > 0, got {self.r0}")
        if not self.r_dc >= self.r0:
            raise InvalidParamsError(f"r_dc ({self.r_dc}) must be >= r0 ({self.r0})")
        if self.r_max_mode not in R_MAX_MODES:
            raise InvalidParamsError(f"r_max_mode must be one of {R_MAX_MODES}, got {self.r_max_mode!r}")
        if self.interp != NEAREST:
            raise InvalidParamsError(f"only nearest-neighbour sampling is implemented, got {self.interp!r}")
        if not self.r_max > self.r_dc:
            raise InvalidParamsError(f"r_max ({self.r_max:g}) must exceed r_dc ({self.r_dc:g})")

    @property
    def center(self) -> tuple[int, int]:
        return self.in_width // 2, self.in_height // 2

    @property
    def r_max(self) -> float:
        if self.r_max_mode == INSCRIBED:
            return min(self.in_width, self.in_height) / 2
        return math.sqrt((self.in_width / 2) ** 2 + (self.in_height / 2) ** 2)

    @property
    def rho_step(self) -> float:
        return math.log(self.r_max / self.r0) / (self.rho_size - 1)

    @property
    def theta_step(self) -> float:
        return 2 * math.pi / self.theta_size


@dataclass(frozen=True, eq=False)
class RemapTable:
    """The precomputed ``(rho, theta) -> (x, y)`` map.

    ``x``, ``y`` and ``valid`` have shape ``(theta_size, rho_size)``.
    Invalid entries store ``(0, 0)``. All arrays are read-only.
    """

    params: PmtParams
    x: np.ndarray
    y: np.ndarray
    valid: np.ndarray
    dc_cols: int
    # flat source index per entry for columns >= dc_cols, invalid ones
    # pointing at pixel 0; those are zeroed via the CSR fix-up list below
    _seg: np.ndarray = field(repr=False)
    _fix_ptr: np.ndarray = field(repr=False)
    _fix_cols: np.ndarray = field(repr=False)

    @property
    def rho_size(self) -> int:
        return self.params.rho_size

    @property
    def theta_size(self) -> int:
        return self.params.theta_size

    @property
    def in_width(self) -> int:
        return self.params.in_width

    @property
    def in_height(self) -> int:
        return self.params.in_height

    @property
    def rho_step(self) -> float:
        return self.params.rho_step

    @property
    def theta_step(self) -> float:
        return self.params.theta_step

    @property
    def valid_count(self) -> int:
        return int(np.count_nonzero(self.valid))

    def same_entries(self, other: "RemapTable") -> bool:
        return (
            self.params == other.params
            and self.dc_cols == other.dc_cols
            and np.array_equal(self.x, other.x)
            and np.array_equal(self.y, other.y)
            and np.array_equal(self.valid, other.valid)
        )


def _readonly(a: np.ndarray) -> np.ndarray:
    a.flags.writeable = False
    return a


def build_map(params: PmtParams) -> RemapTable:
    """Precompute the remap table for ``params``.

    Trigonometry and exponentials are evaluated once per row and once per
    column with :mod:`math`; the 2D table only combines them with a multiply
    and an add, so the result is reproducible bit-for-bit.
    """
    if not isinstance(params, PmtParams):
        raise InvalidParamsError(f"expected PmtParams, got {type(params).__name__}")
    w, h = params.in_width, params.in_height
    cx, cy = params.center
    rho_step = params.rho_step
    theta_step = params.theta_step

    radii = np.array([params.r0 * math.exp(i * rho_step) for i in range(params.rho_size)])
    cos_t = np.array([math.cos(j * theta_step) for j in range(params.theta_size)])
    sin_t = np.array([math.sin(j * theta_step) for j in range(params.theta_size)])

    xs = np.floor(cx + radii[np.newaxis, :] * cos_t[:, np.newaxis] + 0.5).astype(np.int64)
    ys = np.floor(cy - radii[np.newaxis, :] * sin_t[:, np.newaxis] + 0.5).astype(np.int64)

    unblocked = radii >= params.r_dc
    in_grid = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
    valid = in_grid & unblocked[np.newaxis, :]
    dc_cols = int(np.argmax(unblocked)) if unblocked.any() else params.rho_size

    x = np.where(valid, xs, 0).astype(np.int32)
    y = np.where(valid, ys, 0).astype(np.int32)

    seg = np.ascontiguousarray((y[:, dc_cols:].astype(np.int64) * w + x[:, dc_cols:]).astype(np.int32))
    bad_rows, bad_cols = np.nonzero(~valid[:, dc_cols:])
    fix_ptr = np.zeros(params.theta_size + 1, dtype=np.int64)
    np.cumsum(np.bincount(bad_rows, minlength=params.theta_size), out=fix_ptr[1:])
    fix_cols = (bad_cols + dc_cols).astype(np.int32)

    return RemapTable(
        params=params,
        x=_readonly(x),
        y=_readonly(y),
        valid=_readonly(valid),
        dc_cols=dc_cols,
        _seg=_readonly(seg),
        _fix_ptr=_readonly(fix_ptr),
        _fix_cols=_readonly(fix_cols),
    )


@lru_cache(maxsize=4)
def cached_map(params: PmtParams) -> RemapTable:
    """:func:`build_map` memoized on the (hashable) params."""
    return build_map(params)


@numba.njit(nogil=True, cache=True, boundscheck=False)
def _gather_rows(src, seg, dc_cols, fix_ptr, fix_cols, out, row_start, row_stop):
    n = seg.shape[1]
    for j in range(row_start, row_stop):
        o = out[j]
        s = seg[j]
        for i in range(dc_cols):
            o[i] = 0
        for i in range(n):
            o[dc_cols + i] = src[s[i]]
        for k in range(fix_ptr[j], fix_ptr[j + 1]):
            o[fix_cols[k]] = 0


_pools: dict[int, ThreadPoolExecutor] = {}
_pools_lock = threading.Lock()


def default_workers() -> int:
    """Number of CPUs this process may run on."""
    try:
        return max(1, len(os.sched_getaffinity(0)))
    except AttributeError:
        return os.cpu_count() or 1


def _pool(workers: int) -> ThreadPoolExecutor:
    with _pools_lock:
        pool = _pools.get(workers)
        if pool is None:
            pool = ThreadPoolExecutor(max_workers=workers, thread_name_prefix="lpt")
            _pools[workers] = pool
        return pool


def row_bands(rows: int, workers: int) -> list[tuple[int, int]]:
    """Split ``rows`` into at most ``workers`` contiguous, near-equal bands."""
    workers = max(1, min(workers, rows))
    edges = [rows * k // workers for k in range(workers + 1)]
    return [(edges[k], edges[k + 1]) for k in range(workers) if edges[k] < edges[k + 1]]


def apply_lpt(table: RemapTable, grid, out: np.ndarray | None = None, workers: int = 1) -> np.ndarray:
    """Gather ``grid`` through ``table``.

    Parameters
    ----------
    table : RemapTable
    grid : array_like, shape (in_height, in_width)
        Any real numeric dtype; the output keeps it.
    out : numpy.ndarray, optional
        C-contiguous ``(theta_size, rho_size)`` array of the same dtype to
        write into.
    workers : int
        Number of contiguous row bands processed concurrently. The result
        does not depend on it.

    Returns
    -------
    numpy.ndarray
        ``(theta_size, rho_size)`` log-polar image.
    """
    src = np.asarray(grid)
    expected = (table.in_height, table.in_width)
    if src.shape != expected:
        raise InvalidInputError(f"input is {src.shape[::-1]} (WxH), table expects {expected[::-1]}")
    if src.dtype == np.bool_ or not (np.issubdtype(src.dtype, np.integer) or np.issubdtype(src.dtype, np.floating)):
        raise InvalidInputError(f"unsupported input dtype {src.dtype}")
    flat = np.ascontiguousarray(src).reshape(-1)
    shape = (table.theta_size, table.rho_size)
    if out is None:
        out = np.empty(shape, dtype=src.dtype)
    elif out.shape != shape or out.dtype != src.dtype or not out.flags.c_contiguous:
        raise InvalidInputError(f"out must be C-contiguous {shape} {src.dtype}, got {out.shape} {out.dtype}")

    args = (flat, table._seg, table.dc_cols, table._fix_ptr, table._fix_cols, out)
    bands = row_bands(table.theta_size, workers)
    if len(bands) == 1:
        _gather_rows(*args, 0, table.theta_size)
    else:
        futures = [_pool(len(bands)).submit(_gather_rows, *args, a, b) for a, b in bands]
        for f in futures:
            f.result()
    return out


def direct_lpt(params: PmtParams, grid) -> np.ndarray:
    """Reference log-polar transform with live trigonometry per pixel.

    Slow (pure Python loop); meant for checking :func:`apply_lpt` on small
    grids. Uses the same rounding and validity rules.
    """
    src = np.asarray(grid)
    if src.shape != (params.in_height, params.in_width):
        raise InvalidInputError(f"input is {src.shape[::-1]} (WxH), params expect {(params.in_width, params.in_height)}")
    w, h = params.in_width, params.in_height
    cx, cy = w // 2, h // 2
    if params.r_max_mode == INSCRIBED:
        r_max = min(w, h) / 2
    else:
        r_max = math.sqrt((w / 2) ** 2 + (h / 2) ** 2)
    rho_step = math.log(r_max / params.r0) / (params.rho_size - 1)
    theta_step = 2 * math.pi / params.theta_size

    out = np.zeros((params.theta_size, params.rho_size), dtype=src.dtype)
    for j in range(params.theta_size):
        theta = j * theta_step
        c, s = math.cos(theta), math.sin(theta)
        for i in range(params.rho_size):
            r = params.r0 * math.exp(i * rho_step)
            if r < params.r_dc:
                continue
            xs = math.floor(cx + r * c + 0.5)
            ys = math.floor(cy - r * s + 0.5)
            if 0 <= xs < w and 0 <= ys < h:
                out[j, i] = src[ys, xs]
    return out


class MapDump(NamedTuple):
    """Contents of an LPTM file. Arrays have shape (theta_size, rho_size)."""

    rho_size: int
    theta_size: int
    in_width: int
    in_height: int
    x: np.ndarray
    y: np.ndarray
    valid: np.ndarray


def encode_map_dump(table: RemapTable) -> bytes:
    records = np.empty((table.theta_size, table.rho_size), dtype=LPTM_RECORD)
    records["x"] = table.x
    records["y"] = table.y
    records["valid"] = table.valid
    header = LPTM_HEADER.pack(LPTM_MAGIC, table.rho_size, table.theta_size, table.in_width, table.in_height)
    return header + records.tobytes()


def write_map_dump(table: RemapTable, path) -> None:
    atomic_write(path, encode_map_dump(table))


def read_map_dump(path) -> MapDump:
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as exc:
        raise FormatError(path, 0, f"cannot read file: {exc.strerror or exc}") from exc
    if len(data) < LPTM_HEADER.size:
        raise FormatError(path, len(data), "truncated header")
    magic, rho_size, theta_size, in_width, in_height = LPTM_HEADER.unpack_from(data)
    if magic != LPTM_MAGIC:
        raise FormatError(path, 0, f"bad magic {magic!r}, expected {LPTM_MAGIC!r}")
    count = rho_size * theta_size
    need = count * LPTM_RECORD.itemsize
    if len(data) - LPTM_HEADER.size < need:
        raise FormatError(path, len(data), f"truncated records: expected {need} bytes after offset {LPTM_HEADER.size}")
    records = np.frombuffer(data, dtype=LPTM_RECORD, count=count, offset=LPTM_HEADER.size)
    records = records.reshape(theta_size, rho_size)
    return MapDump(
        rho_size,
        theta_size,
        in_width,
        in_height,
        records["x"].astype(np.int32),
        records["y"].astype(np.int32),
        records["valid"].astype(bool),
    )
