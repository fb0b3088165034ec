"""Centered Fourier spectra and 8-bit capture of the FT plane.

This module plays the part of the lens and the focal plane array: it turns
an image into the magnitude (or intensity) of its centered 2D DFT and
quantizes that to the 8-bit frame a camera would deliver.

The zero-frequency term always lands on ``(cx, cy) = (W // 2, H // 2)``,
for odd and even sizes alike, which is where ``numpy.fft.fftshift`` puts it.
Arrays are indexed ``[row, col]``, so a grid of width W and height H has
shape ``(H, W)``.
"""

from __future__ import annotations

import numpy as np

from .errors import InvalidInputError

MAGNITUDE = "magnitude"
INTENSITY = "intensity"
SPECTRUM_KINDS = (MAGNITUDE, INTENSITY)


def _as_image(image) -> np.ndarray:
    arr = np.asarray(image)
    if arr.ndim != 2:
        raise InvalidInputError(f"expected a 2D grid, got shape {arr.shape}")
    if arr.shape[0] < 2 or arr.shape[1] < 2:
        raise InvalidInputError(f"grid must be at least 2x2, got {arr.shape[1]}x{arr.shape[0]}")
    if np.iscomplexobj(arr):
        raise InvalidInputError("expected a real-valued image")
    return arr.astype(np.float64, copy=False)


def dc_center(width: int, height: int) -> tuple[int, int]:
    """Return ``(cx, cy)``, the pixel holding the DC term after centering."""
    return width // 2, height // 2


def dft2_centered(image) -> np.ndarray:
    """Unnormalized forward 2D DFT with DC moved to the center pixel.

    Parameters
    ----------
    image : array_like, shape (H, W)
        Real-valued image, at least 2x2. Any size is accepted; nothing is
        padded.

    Returns
    -------
    numpy.ndarray
        Complex128 array of shape (H, W) whose element ``[H//2, W//2]`` is
        the sum of all input pixels.
    """
    arr = _as_image(image)
    return np.fft.fftshift(np.fft.fft2(arr))


def spectrum(field, kind: str = MAGNITUDE) -> np.ndarray:
    """Per-pixel ``|F|`` (magnitude) or ``|F|**2`` (intensity) of a field."""
    if kind not in SPECTRUM_KINDS:
        raise InvalidInputError(f"unknown spectrum kind {kind!r}; expected one of {SPECTRUM_KINDS}")
    f = np.asarray(field)
    if kind == MAGNITUDE:
        return np.abs(f)
    return f.real * f.real + f.imag * f.imag


def radius_grid(width: int, height: int) -> np.ndarray:
    """Euclidean distance of every pixel from the DC pixel, shape (H, W)."""
    cx, cy = dc_center(width, height)
    cols = np.arange(width) - cx
    rows = np.arange(height) - cy
    return np.sqrt(cols[np.newaxis, :] ** 2 + rows[:, np.newaxis] ** 2)


def quantize8(spec, dc_block_radius: float = 0.0) -> np.ndarray:
    """Quantize a spectrum to uint8 the way an 8-bit FPA capture would.

    Pixels closer than ``dc_block_radius`` to the DC pixel are zeroed. The
    rest are scaled so their maximum becomes 255 and rounded half-up. An
    unblocked region that is entirely zero gives an all-zero frame.
    """
    if dc_block_radius < 0:
        raise InvalidInputError(f"dc_block_radius must be >= 0, got {dc_block_radius}")
    s = np.asarray(spec, dtype=np.float64)
    if s.ndim != 2:
        raise InvalidInputError(f"expected a 2D spectrum, got shape {s.shape}")
    if np.any(s < 0):
        raise InvalidInputError("spectrum values must be non-negative")
    h, w = s.shape
    blocked = radius_grid(w, h) < dc_block_radius
    out = np.zeros((h, w), dtype=np.uint8)
    unblocked = s[~blocked]
    peak = unblocked.max() if unblocked.size else 0.0
    if peak <= 0:
        return out
    scaled = np.floor(s * (255.0 / peak) + 0.5)
    np.clip(scaled, 0, 255, out=scaled)
    out[...] = scaled.astype(np.uint8)
    out[blocked] = 0
    return out


def spectrum_frame(image, kind: str = MAGNITUDE, dc_block_radius: float = 0.0) -> np.ndarray:
    """Shortcut for ``quantize8(spectrum(dft2_centered(image), kind), r)``."""
    return quantize8(spectrum(dft2_centered(image), kind), dc_block_radius)
