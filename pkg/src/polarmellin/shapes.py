"""Deterministic synthetic test images.

Shapes are defined in a unit frame and rasterized with 4x4 supersampling.
``scale`` multiplies the linear size and ``rotation_deg`` turns the shape
from the +column axis toward the +row axis (clockwise on screen, since rows
grow downward). ``shift`` moves the rendered shape by whole or fractional
pixels ``(dx, dy)``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import InvalidInputError

# radius of a scale-1 shape as a fraction of the shorter image side
BASE_RADIUS = 0.15
SUPERSAMPLE = 4

_POLYGONS = {
    # scalene, so no rotation maps it onto itself
    "triangle": [(0.0, -1.0), (0.85, 0.65), (-0.55, 0.8)],
    "square": [(-0.7, -0.7), (0.7, -0.7), (0.7, 0.7), (-0.7, 0.7)],
    "arrow": [(-1.0, -0.25), (0.2, -0.25), (0.2, -0.6), (1.0, 0.0), (0.2, 0.6), (0.2, 0.25), (-1.0, 0.25)],
    "letter_f": [
        (-0.6, -1.0), (0.7, -1.0), (0.7, -0.6), (-0.2, -0.6), (-0.2, -0.15), (0.45, -0.15),
        (0.45, 0.25), (-0.2, 0.25), (-0.2, 1.0), (-0.6, 1.0),
    ],
    "cross": [
        (-0.25, -1.0), (0.25, -1.0), (0.25, -0.25), (1.0, -0.25), (1.0, 0.25), (0.25, 0.25),
        (0.25, 1.0), (-0.25, 1.0), (-0.25, 0.25), (-1.0, 0.25), (-1.0, -0.25), (-0.25, -0.25),
    ],
}
SHAPES = tuple(sorted([*_POLYGONS, "ellipse"]))


def _inside_polygon(u: np.ndarray, v: np.ndarray, poly) -> np.ndarray:
    inside = np.zeros(u.shape, dtype=bool)
    n = len(poly)
    for k in range(n):
        x1, y1 = poly[k]
        x2, y2 = poly[(k + 1) % n]
        crosses = (y1 > v) != (y2 > v)
        with np.errstate(divide="ignore", invalid="ignore"):
            x_at = x1 + (v - y1) * (x2 - x1) / (y2 - y1)
        inside ^= crosses & (u < x_at)
    return inside


def _inside(shape: str, u: np.ndarray, v: np.ndarray) -> np.ndarray:
    if shape == "ellipse":
        return (u / 1.0) ** 2 + (v / 0.55) ** 2 <= 1.0
    return _inside_polygon(u, v, _POLYGONS[shape])


def render_shape(
    shape: str,
    scale: float = 1.0,
    rotation_deg: float = 0.0,
    width: int = 512,
    height: int | None = None,
    shift: tuple[float, float] = (0.0, 0.0),
) -> np.ndarray:
    """Rasterize ``shape`` into a uint8 image of shape (height, width)."""
    if shape not in SHAPES:
        raise InvalidInputError(f"unknown shape {shape!r}; valid shapes: {', '.join(SHAPES)}")
    height = width if height is None else height
    if width < 2 or height < 2:
        raise InvalidInputError(f"image must be at least 2x2, got {width}x{height}")
    if not scale > 0:
        raise InvalidInputError(f"scale must be > 0, got {scale}")
    phi = math.radians(rotation_deg % 360.0)
    c, s = math.cos(phi), math.sin(phi)
    radius = BASE_RADIUS * min(width, height) * scale

    sub = (np.arange(SUPERSAMPLE) + 0.5) / SUPERSAMPLE - 0.5
    cols = (np.arange(width)[:, None] + sub[None, :]).reshape(-1) - width // 2 - shift[0]
    rows = (np.arange(height)[:, None] + sub[None, :]).reshape(-1) - height // 2 - shift[1]
    px = cols[np.newaxis, :]
    py = rows[:, np.newaxis]
    # undo the rotation, then the scale, to land in the unit frame
    u = (c * px + s * py) / radius
    v = (-s * px + c * py) / radius
    hits = _inside(shape, u, v).astype(np.uint16)
    counts = hits.reshape(height, SUPERSAMPLE, width, SUPERSAMPLE).sum(axis=(1, 3))
    full = SUPERSAMPLE * SUPERSAMPLE
    return ((counts * 255 + full // 2) // full).astype(np.uint8)
