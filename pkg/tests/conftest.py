import numpy as np
import pytest

from polarmellin.lpt import PmtParams


def direct_dft_centered(image: np.ndarray) -> np.ndarray:
    """O(N^4) textbook DFT, then the same centering as fftshift."""
    h, w = image.shape
    out = np.zeros((h, w), dtype=np.complex128)
    for v in range(h):
        for u in range(w):
            acc = 0j
            for y in range(h):
                for x in range(w):
                    acc += image[y, x] * np.exp(-2j * np.pi * (u * x / w + v * y / h))
            out[v, u] = acc
    return np.roll(out, (h // 2, w // 2), axis=(0, 1))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def small_params():
    return PmtParams(in_width=64, in_height=48, rho_size=40, theta_size=36, r_dc=2.0)


def moved_shape(shape, scale, rotation_deg, size, shift=(0.0, 0.0)):
    """Reference shape translated by ``shift``, then scaled and rotated about
    the image center: the query convention of the matcher."""
    import math

    from polarmellin.shapes import render_shape

    phi = math.radians(rotation_deg)
    dx, dy = shift
    ox = scale * (math.cos(phi) * dx - math.sin(phi) * dy)
    oy = scale * (math.sin(phi) * dx + math.cos(phi) * dy)
    return render_shape(shape, scale, rotation_deg, size, shift=(ox, oy))


def pytest_terminal_summary(terminalreporter):
    module = __import__("sys").modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
