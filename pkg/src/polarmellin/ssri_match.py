"""Shift/scale/rotation invariant matching on PMT signatures.

The PMT of an image is the log-polar transform of its centered Fourier
magnitude. Translating the image leaves it unchanged, scaling by ``a``
shifts it by ``ln(a) / rho_step`` columns and rotating by ``phi`` shifts it
by ``phi / theta_step`` rows (circularly). Correlating two PMTs therefore
yields the scale and rotation between the images; re-registering the query
with those values and cross-correlating in the image domain gives the
translation.

Conventions
-----------
* ``correlate(a, b)`` reports the shift of ``b`` relative to ``a``:
  if ``b`` is ``a`` moved down 5 rows and right 3 columns the peak is
  ``(d_rho=3, d_theta=5)``.
* Matching correlates ``pmt(query)`` against ``pmt(reference)``. The query is
  taken to be the reference translated by ``(dx, dy)``, then scaled by
  ``scale_a`` and rotated by ``rotation_phi`` about the image center.
  Positive rotation turns the +column axis toward the +row axis.
* Magnitude spectra of real images are centrosymmetric, so rotation is only
  known modulo pi; :class:`MatchResult` says when the two readings are
  indistinguishable instead of picking one.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError, InvalidScaleError, NoMatchError
from .ft_engine import MAGNITUDE, dft2_centered, spectrum
from .lpt import PmtParams, apply_lpt, cached_map

AMBIGUITY_RATIO = 0.8
FLAT_SURFACE_EPS = 1e-9
# half-width in rows of the window searched for the pi-twin of the main peak
TWIN_SEARCH_ROWS = 2


def pmt(image, params: PmtParams, kind: str = MAGNITUDE, workers: int = 1) -> np.ndarray:
    """Polar Mellin transform: LPT of the centered spectrum of ``image``."""
    img = np.asarray(image)
    if img.shape != (params.in_height, params.in_width):
        raise InvalidInputError(
            f"image is {img.shape[1]}x{img.shape[0]}, params expect {params.in_width}x{params.in_height}"
        )
    return apply_lpt(cached_map(params), spectrum(dft2_centered(img), kind), workers=workers)


def condition(signature) -> np.ndarray:
    """Flatten the radial envelope of a PMT before correlation.

    Takes ``log1p`` and then standardizes every rho column across theta.
    Spectral magnitude falls off roughly as a power of radius, which in
    log-polar space is the same profile at every scale; left in place it
    pins the correlation peak at zero rho shift. All-constant columns
    (the DC block) become 0.
    """
    m = np.log1p(np.asarray(signature, dtype=np.float64))
    mu = m.mean(axis=0, keepdims=True)
    sd = m.std(axis=0, keepdims=True)
    ok = sd > 1e-12
    return np.where(ok, (m - mu) / np.where(ok, sd, 1.0), 0.0)


@dataclass(frozen=True)
class Peak:
    d_rho: float
    d_theta: float
    value: float


@dataclass(frozen=True, eq=False)
class CorrelationSurface:
    """Normalized cross-correlation over all (theta, rho) lags.

    ``values[j, i]`` is the correlation at theta lag ``j`` (``0 <= j < T``,
    circular) and rho lag ``i - (R - 1)`` (linear, ``-(R-1) .. R-1``).
    """

    values: np.ndarray
    rho_size: int
    theta_size: int
    peak: Peak
    secondary_peak: Peak

    def at(self, d_rho: int, d_theta: int) -> float:
        if abs(d_rho) >= self.rho_size:
            return 0.0
        return float(self.values[d_theta % self.theta_size, d_rho + self.rho_size - 1])

    @property
    def flat(self) -> bool:
        return float(self.values.max() - self.values.min()) < FLAT_SURFACE_EPS


def _signed(lag: int, size: int) -> int:
    return lag - size if lag > size // 2 else lag


def _parabolic(vm: float, v0: float, vp: float) -> float:
    denom = vm - 2 * v0 + vp
    if denom >= 0:
        return 0.0
    return 0.5 * (vm - vp) / denom


def _normalized(a: np.ndarray) -> np.ndarray:
    a = a - a.mean()
    norm = np.linalg.norm(a)
    return a / norm if norm > 0 else a


def correlate(pmt_a, pmt_b, subpixel: bool = False) -> CorrelationSurface:
    """Zero-mean, unit-energy cross-correlation of two PMTs.

    Circular along theta (rows), zero-padded along rho (columns).
    """
    a = np.asarray(pmt_a, dtype=np.float64)
    b = np.asarray(pmt_b, dtype=np.float64)
    if a.ndim != 2 or a.shape != b.shape:
        raise InvalidInputError(f"PMT shapes differ or are not 2D: {a.shape} vs {b.shape}")
    t, r = a.shape
    a = _normalized(a)
    b = _normalized(b)
    fa = np.fft.rfft2(a, s=(t, 2 * r))
    fb = np.fft.rfft2(b, s=(t, 2 * r))
    full = np.fft.irfft2(np.conj(fa) * fb, s=(t, 2 * r))
    # reorder rho lags to -(r-1) .. r-1
    values = np.concatenate([full[:, r + 1 :], full[:, :r]], axis=1)

    j, i = np.unravel_index(int(np.argmax(values)), values.shape)
    peak_value = float(values[j, i])
    d_rho, d_theta = float(i - (r - 1)), float(_signed(int(j), t))
    if subpixel:
        if 0 < i < values.shape[1] - 1:
            d_rho += _parabolic(values[j, i - 1], peak_value, values[j, i + 1])
        d_theta += _parabolic(values[(j - 1) % t, i], peak_value, values[(j + 1) % t, i])
    peak = Peak(d_rho, d_theta, peak_value)

    twin_rows = [(int(j) + t // 2 + k) % t for k in range(-TWIN_SEARCH_ROWS, TWIN_SEARCH_ROWS + 1)]
    band = values[twin_rows]
    bj, bi = np.unravel_index(int(np.argmax(band)), band.shape)
    secondary = Peak(float(bi - (r - 1)), float(_signed(twin_rows[bj], t)), float(band[bj, bi]))
    return CorrelationSurface(values, r, t, peak, secondary)


@dataclass(frozen=True)
class MatchResult:
    """Scale and rotation of the query relative to the reference.

    ``rotation_phi`` is in ``[0, pi)``; when ``ambiguous`` is set the true
    rotation may equally be ``rotation_phi + pi``.
    """

    scale_a: float
    rotation_phi: float
    ambiguous: bool
    confidence: float
    translation: tuple[int, int] | None = None
    d_rho: float = 0.0
    d_theta: float = 0.0

    def __post_init__(self):
        if not self.scale_a > 0:
            raise InvalidScaleError(f"scale_a must be > 0, got {self.scale_a}")
        if not 0 <= self.rotation_phi < math.pi:
            raise InvalidInputError(f"rotation_phi must lie in [0, pi), got {self.rotation_phi}")

    def to_dict(self) -> dict:
        d = {
            "scale_a": self.scale_a,
            "rotation_phi_rad": self.rotation_phi,
            "ambiguous": self.ambiguous,
            "confidence": self.confidence,
        }
        if self.translation is not None:
            d["dx"], d["dy"] = int(self.translation[0]), int(self.translation[1])
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def peak_to_scale_rotation(surface: CorrelationSurface, table) -> MatchResult:
    """Turn the surface peak into ``(a, phi)`` using the table's step sizes.

    ``table`` may be a :class:`~polarmellin.lpt.RemapTable` or
    :class:`~polarmellin.lpt.PmtParams`; only ``rho_step`` and
    ``theta_step`` are read.
    """
    if surface.flat:
        raise NoMatchError("correlation surface is flat; nothing to match")
    p = surface.peak
    scale_a = math.exp(p.d_rho * table.rho_step)
    phi = (p.d_theta * table.theta_step) % math.pi
    if phi >= math.pi:
        phi = 0.0
    ambiguous = surface.secondary_peak.value >= AMBIGUITY_RATIO * p.value
    confidence = min(1.0, max(0.0, p.value))
    return MatchResult(scale_a, phi, bool(ambiguous), confidence, d_rho=p.d_rho, d_theta=p.d_theta)


def unwarp(query, scale_a: float, rotation_phi: float) -> np.ndarray:
    """Undo a scale and rotation about the image center (nearest neighbour).

    Output pixel ``p`` reads ``query(c + a * R(phi) (p - c))``; samples
    falling outside the grid read 0.
    """
    q = np.asarray(query, dtype=np.float64)
    h, w = q.shape
    cx, cy = w // 2, h // 2
    c, s = math.cos(rotation_phi), math.sin(rotation_phi)
    px = (np.arange(w) - cx)[np.newaxis, :]
    py = (np.arange(h) - cy)[:, np.newaxis]
    sx = np.floor(cx + scale_a * (c * px - s * py) + 0.5).astype(np.int64)
    sy = np.floor(cy + scale_a * (s * px + c * py) + 0.5).astype(np.int64)
    inside = (sx >= 0) & (sx < w) & (sy >= 0) & (sy < h)
    if not inside.any():
        raise InvalidScaleError(f"scale {scale_a:g} maps every pixel outside the {w}x{h} grid")
    out = np.zeros_like(q)
    out[inside] = q[sy[inside], sx[inside]]
    return out


def locate(reference, moved) -> tuple[int, int, float]:
    """Circular normalized cross-correlation; returns ``(dx, dy, peak)``
    such that ``moved`` is approximately ``reference`` shifted by
    ``(dx, dy)``."""
    a = _normalized(np.asarray(reference, dtype=np.float64))
    b = _normalized(np.asarray(moved, dtype=np.float64))
    if a.shape != b.shape:
        raise InvalidInputError(f"image shapes differ: {a.shape} vs {b.shape}")
    h, w = a.shape
    c = np.fft.irfft2(np.conj(np.fft.rfft2(a)) * np.fft.rfft2(b), s=(h, w))
    j, i = np.unravel_index(int(np.argmax(c)), c.shape)
    return _signed(int(i), w), _signed(int(j), h), float(c[j, i])


def register_and_locate(query, reference, match: MatchResult) -> tuple[int, int, float]:
    """Bring ``query`` back to the reference's scale and orientation, then
    find the remaining translation.

    Both ``phi`` and ``phi + pi`` are tried when ``match.ambiguous`` is set;
    the stronger correlation wins. Returns ``(dx, dy, confidence)``.
    """
    q = np.asarray(query, dtype=np.float64)
    ref = np.asarray(reference, dtype=np.float64)
    if q.shape != ref.shape:
        raise InvalidInputError(f"query {q.shape[::-1]} and reference {ref.shape[::-1]} differ in size")
    angles = [match.rotation_phi]
    if match.ambiguous:
        angles.append(match.rotation_phi + math.pi)
    best = None
    for phi in angles:
        restored = unwarp(q, match.scale_a, phi)
        if q.any() and not restored.any():
            raise InvalidScaleError(f"scale {match.scale_a:g} leaves the resampled query empty")
        dx, dy, value = locate(ref, restored)
        if best is None or value > best[2]:
            best = (dx, dy, value)
    dx, dy, value = best
    return dx, dy, min(1.0, max(0.0, value))


def match_images(
    reference, query, params: PmtParams, kind: str = MAGNITUDE, locate_shift: bool = True, workers: int = 1
) -> MatchResult:
    """Full two-stage match: PMT correlation for scale and rotation, then
    re-registration for translation."""
    ref = np.asarray(reference)
    q = np.asarray(query)
    if ref.shape != q.shape:
        raise InvalidInputError(f"reference is {ref.shape[1]}x{ref.shape[0]}, query is {q.shape[1]}x{q.shape[0]}")
    sig_q = condition(pmt(q, params, kind, workers))
    sig_ref = condition(pmt(ref, params, kind, workers))
    result = peak_to_scale_rotation(correlate(sig_q, sig_ref), params)
    if not locate_shift:
        return result
    dx, dy, _ = register_and_locate(q, ref, result)
    return MatchResult(
        result.scale_a,
        result.rotation_phi,
        result.ambiguous,
        result.confidence,
        (dx, dy),
        result.d_rho,
        result.d_theta,
    )
