import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from polarmellin.errors import InvalidInputError
from polarmellin.ft_engine import (
    INTENSITY,
    MAGNITUDE,
    dc_center,
    dft2_centered,
    quantize8,
    radius_grid,
    spectrum,
    spectrum_frame,
)

from conftest import direct_dft_centered


@pytest.mark.parametrize("shape", [(4, 4), (5, 7), (6, 3), (2, 2)])
def test_matches_direct_dft(rng, shape):
    img = rng.random(shape)
    np.testing.assert_allclose(dft2_centered(img), direct_dft_centered(img), atol=1e-9)


def test_constant_image_is_dc_only():
    c, w, h = 3.5, 10, 7
    f = dft2_centered(np.full((h, w), c))
    cx, cy = dc_center(w, h)
    assert f[cy, cx] == pytest.approx(c * w * h)
    rest = np.abs(f).copy()
    rest[cy, cx] = 0
    assert rest.max() <= 1e-9 * c * w * h


def test_single_impulse_has_flat_magnitude():
    img = np.zeros((4, 4))
    img[0, 0] = 1
    np.testing.assert_allclose(np.abs(direct_dft_centered(img)), 1.0, atol=1e-12)
    np.testing.assert_allclose(spectrum(dft2_centered(img)), 1.0, atol=1e-12)


def test_magnitude_and_intensity_of_pythagorean_value():
    f = np.array([[3 + 4j]])
    assert spectrum(f, MAGNITUDE)[0, 0] == 5
    assert spectrum(f, INTENSITY)[0, 0] == 25


def test_zero_field_gives_zero_spectrum():
    z = np.zeros((3, 3), complex)
    assert not spectrum(z, MAGNITUDE).any()
    assert not spectrum(z, INTENSITY).any()


def test_unknown_kind_rejected():
    with pytest.raises(InvalidInputError):
        spectrum(np.zeros((2, 2)), "phase")


@pytest.mark.parametrize("bad", [np.zeros((1, 5)), np.zeros((5, 1)), np.zeros(5), np.zeros((2, 2), complex)])
def test_rejects_bad_images(bad):
    with pytest.raises(InvalidInputError):
        dft2_centered(bad)


def test_parseval(rng):
    for shape in [(8, 8), (31, 17), (256, 256)]:
        img = rng.random(shape)
        total = spectrum(dft2_centered(img), INTENSITY).sum()
        assert total == pytest.approx(img.size * (img**2).sum(), rel=1e-6)


def _centrosymmetric(s: np.ndarray) -> bool:
    h, w = s.shape
    cx, cy = dc_center(w, h)
    # pair (cx+u, cy+v) with (cx-u, cy-v) wherever both exist
    for v in range(-cy, h - cy):
        for u in range(-cx, w - cx):
            y2, x2 = cy - v, cx - u
            if 0 <= y2 < h and 0 <= x2 < w:
                a, b = s[cy + v, cx + u], s[y2, x2]
                if abs(a - b) > 1e-9 * max(abs(a), abs(b), 1e-300):
                    return False
    return True


images = arrays(np.float64, st.tuples(st.integers(2, 12), st.integers(2, 12)), elements=st.floats(-100, 100))


@settings(max_examples=60, deadline=None)
@given(images, st.integers(-20, 20), st.integers(-20, 20))
def test_shift_invariance(img, dx, dy):
    a = spectrum(dft2_centered(img))
    b = spectrum(dft2_centered(np.roll(img, (dy, dx), axis=(0, 1))))
    np.testing.assert_allclose(b, a, rtol=1e-9, atol=1e-9 * max(1.0, a.max()))


@settings(max_examples=40, deadline=None)
@given(images)
def test_centrosymmetry(img):
    assert _centrosymmetric(spectrum(dft2_centered(img)))


def test_quarter_turn_rotates_square_spectrum(rng):
    img = rng.random((16, 16))
    a = spectrum(dft2_centered(img))
    b = spectrum(dft2_centered(np.rot90(img)))
    # rot90 of an even grid moves the DC pixel by one, so compare about the DC
    cy = cx = 8
    for v in range(-7, 8):
        for u in range(-7, 8):
            assert b[cy - u, cx + v] == pytest.approx(a[cy + v, cx + u], rel=1e-9, abs=1e-9)


class TestQuantize8:
    def test_peak_maps_to_255(self):
        s = np.zeros((9, 9))
        s[0, 0] = 512
        s[1, 1] = 256
        q = quantize8(s, 0)
        assert q[0, 0] == 255
        assert q[1, 1] == 128  # 127.5 rounds up

    def test_dc_block_radius(self):
        s = np.ones((21, 33)) * 7
        q = quantize8(s, 4)
        r = radius_grid(33, 21)
        assert not q[r < 4].any()
        assert (q[r >= 4] == 255).all()

    def test_blocked_peak_is_ignored(self):
        s = np.ones((11, 11))
        s[5, 5] = 1e9
        q = quantize8(s, 1)
        assert q[5, 5] == 0
        assert (q[radius_grid(11, 11) >= 1] == 255).all()

    def test_all_zero_unblocked_region(self):
        s = np.zeros((8, 8))
        s[4, 4] = 10
        assert not quantize8(s, 2).any()
        assert not quantize8(np.zeros((4, 4))).any()

    def test_rejects_negative_radius_and_values(self):
        with pytest.raises(InvalidInputError):
            quantize8(np.ones((3, 3)), -1)
        with pytest.raises(InvalidInputError):
            quantize8(-np.ones((3, 3)))

    def test_spectrum_frame_is_deterministic(self, rng):
        img = rng.integers(0, 256, (40, 50)).astype(np.uint8)
        a = spectrum_frame(img, MAGNITUDE, 4)
        b = spectrum_frame(img.copy(), MAGNITUDE, 4)
        assert a.dtype == np.uint8
        assert np.array_equal(a, b)
