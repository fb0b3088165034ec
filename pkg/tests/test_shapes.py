import numpy as np
import pytest

from polarmellin.errors import InvalidInputError
from polarmellin.shapes import SHAPES, render_shape


@pytest.mark.parametrize("shape", SHAPES)
def test_every_shape_renders(shape):
    img = render_shape(shape, 1.0, 0.0, 128)
    assert img.dtype == np.uint8 and img.shape == (128, 128)
    assert img.max() == 255 and img[0, 0] == 0


def test_rectangular_canvas():
    assert render_shape("square", width=100, height=60).shape == (60, 100)


def test_rotation_is_periodic():
    assert np.array_equal(render_shape("triangle", 1.0, 360.0, 96), render_shape("triangle", 1.0, 0.0, 96))
    assert np.array_equal(render_shape("arrow", 1.0, -90.0, 96), render_shape("arrow", 1.0, 270.0, 96))


def test_positive_rotation_is_clockwise_on_screen():
    # the arrow points along +x; a quarter turn points it down the rows
    img = render_shape("arrow", 1.0, 90.0, 128).astype(float)
    rows, cols = np.nonzero(img)
    assert abs(cols.mean() - 64) < 2
    tip = rows.max() - 64
    tail = 64 - rows.min()
    assert tip > 0 and abs(tip - tail) < 3
    head_rows = rows[np.abs(cols - 64) > 10]
    assert head_rows.mean() > 64


def test_shift_moves_shape():
    a = render_shape("square", 1.0, 0.0, 128).astype(float)
    b = render_shape("square", 1.0, 0.0, 128, shift=(7, -3)).astype(float)
    assert np.array_equal(np.roll(a, (-3, 7), axis=(0, 1)), b)


def test_rejects_bad_arguments():
    with pytest.raises(InvalidInputError, match="valid shapes"):
        render_shape("pentagon")
    with pytest.raises(InvalidInputError):
        render_shape("square", scale=0)
    with pytest.raises(InvalidInputError):
        render_shape("square", width=1)
