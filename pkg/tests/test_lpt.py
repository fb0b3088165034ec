import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from polarmellin.errors import FormatError, InvalidInputError, InvalidParamsError
from polarmellin.lpt import (
    CORNER,
    INSCRIBED,
    LPTM_HEADER,
    LPTM_RECORD,
    PmtParams,
    apply_lpt,
    build_map,
    cached_map,
    direct_lpt,
    encode_map_dump,
    read_map_dump,
    row_bands,
    write_map_dump,
)


def test_default_geometry():
    p = PmtParams()
    assert (p.rho_size, p.theta_size) == (1920, 1080)
    assert p.center == (960, 540)
    assert p.r_max == 540
    assert p.rho_step == pytest.approx(3.2786e-3, rel=1e-3)
    assert p.theta_step == pytest.approx(2 * math.pi / 1080)
    # ln(4) / rho_step rounded up: first column at or beyond r_dc = 4
    assert cached_map(p).dc_cols == 423


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(in_width=1),
        dict(rho_size=1),
        dict(r0=0),
        dict(r0=2.0, r_dc=1.0),
        dict(r_max_mode="diagonal"),
        dict(interp="bilinear"),
        dict(in_width=8, in_height=8, r_dc=4.0),
    ],
)
def test_invalid_params(kwargs):
    with pytest.raises(InvalidParamsError):
        PmtParams(**kwargs)


def test_corner_mode_radius():
    p = PmtParams(in_width=30, in_height=40, r_max_mode=CORNER)
    assert p.r_max == pytest.approx(25.0)


def test_column_zero_sits_at_r0():
    p = PmtParams(in_width=64, in_height=64, rho_size=32, theta_size=8, r0=1.0, r_dc=1.0)
    t = build_map(p)
    # theta = 0 points along +x, r = 1
    assert (t.x[0, 0], t.y[0, 0]) == (33, 32)
    # theta = 90 degrees points up (decreasing row)
    assert (t.x[2, 0], t.y[2, 0]) == (32, 31)
    # last column reaches r_max
    assert t.x[0, -1] == 32 + 32 or not t.valid[0, -1]


def test_invalid_entries_store_origin():
    t = build_map(PmtParams(in_width=40, in_height=30, rho_size=50, theta_size=24, r_dc=3.0, r_max_mode=CORNER))
    assert (~t.valid).any()
    assert not t.x[~t.valid].any()
    assert not t.y[~t.valid].any()
    assert not t.valid[:, : t.dc_cols].any()


def test_table_is_read_only():
    t = build_map(PmtParams(in_width=16, in_height=16, rho_size=8, theta_size=8, r_dc=1.0))
    with pytest.raises(ValueError):
        t.x[0, 0] = 5


def test_build_map_is_deterministic():
    p = PmtParams(in_width=97, in_height=61, rho_size=70, theta_size=45, r0=0.7, r_dc=2.3)
    assert build_map(p).same_entries(build_map(p))


@st.composite
def params_and_grid(draw):
    w = draw(st.integers(8, 128))
    h = draw(st.integers(8, 128))
    r0 = draw(st.sampled_from([0.5, 1.0, 1.5]))
    mode = draw(st.sampled_from([INSCRIBED, CORNER]))
    r_max = min(w, h) / 2 if mode == INSCRIBED else math.hypot(w / 2, h / 2)
    r_dc = draw(st.floats(r0, min(r_max - 0.5, 6.0)))
    p = PmtParams(
        in_width=w,
        in_height=h,
        rho_size=draw(st.integers(2, 128)),
        theta_size=draw(st.integers(2, 128)),
        r0=r0,
        r_dc=r_dc,
        r_max_mode=mode,
    )
    seed = draw(st.integers(0, 2**32 - 1))
    grid = np.random.default_rng(seed).integers(1, 256, (h, w)).astype(np.uint8)
    return p, grid


@settings(max_examples=50, deadline=None)
@given(params_and_grid(), st.integers(1, 4))
def test_matches_direct_oracle(case, workers):
    p, grid = case
    got = apply_lpt(build_map(p), grid, workers=workers)
    want = direct_lpt(p, grid)
    assert got.dtype == want.dtype
    assert np.array_equal(got, want)


def test_workers_do_not_change_result(rng):
    p = PmtParams(in_width=300, in_height=200, rho_size=256, theta_size=181, r_dc=3.0)
    t = build_map(p)
    grid = rng.random((200, 300)).astype(np.float32)
    one = apply_lpt(t, grid, workers=1)
    for w in (2, 3, 7, 500):
        assert np.array_equal(apply_lpt(t, grid, workers=w), one)


def test_dtype_preserved_and_out_reused(rng):
    p = PmtParams(in_width=32, in_height=32, rho_size=16, theta_size=16, r_dc=1.0)
    t = build_map(p)
    for dtype in (np.uint8, np.uint16, np.float32, np.float64, np.int32):
        g = rng.integers(0, 200, (32, 32)).astype(dtype)
        out = np.empty((16, 16), dtype)
        res = apply_lpt(t, g, out=out)
        assert res is out
        assert np.array_equal(res, direct_lpt(p, g))


def test_apply_rejects_bad_input():
    t = build_map(PmtParams(in_width=32, in_height=32, rho_size=16, theta_size=16, r_dc=1.0))
    with pytest.raises(InvalidInputError):
        apply_lpt(t, np.zeros((31, 32)))
    with pytest.raises(InvalidInputError):
        apply_lpt(t, np.zeros((32, 32), bool))
    with pytest.raises(InvalidInputError):
        apply_lpt(t, np.zeros((32, 32), np.uint8), out=np.zeros((16, 16), np.float32))


def test_constant_input_fills_valid_entries_only():
    p = PmtParams(in_width=64, in_height=48, rho_size=40, theta_size=36, r_dc=3.0, r_max_mode=CORNER)
    t = build_map(p)
    out = apply_lpt(t, np.full((48, 64), 9, np.uint8))
    assert np.array_equal(out == 9, t.valid)


def test_row_bands_cover_rows():
    for rows, workers in [(10, 3), (1080, 8), (5, 10), (7, 1)]:
        bands = row_bands(rows, workers)
        assert bands[0][0] == 0 and bands[-1][1] == rows
        assert all(a[1] == b[0] for a, b in zip(bands, bands[1:]))
        assert len(bands) == min(rows, workers)


@pytest.mark.parametrize("r_dcs", [(1.0, 2.0, 4.0, 8.0), (1.5, 1.6, 3.0)])
def test_dc_block_is_monotone(r_dcs):
    tables = [build_map(PmtParams(in_width=128, in_height=96, rho_size=100, theta_size=60, r_dc=r)) for r in r_dcs]
    cols = [t.dc_cols for t in tables]
    counts = [t.valid_count for t in tables]
    assert cols == sorted(cols)
    assert counts == sorted(counts, reverse=True)


def test_default_dc_block_shrinks_table():
    p2 = PmtParams(r_dc=2.0)
    p4 = PmtParams(r_dc=4.0)
    assert build_map(p4).valid_count < build_map(p2).valid_count
    # ceil(ln(2) / rho_step) = ceil(211.4)
    assert build_map(p2).dc_cols == 212


def test_scale_becomes_column_shift():
    # a ring at radius r lands in column ln(r/r0)/rho_step; doubling r
    # moves it by ln(2)/rho_step columns
    p = PmtParams(in_width=257, in_height=257, rho_size=256, theta_size=90, r_dc=2.0)
    t = build_map(p)
    yy, xx = np.mgrid[:257, :257]
    rr = np.hypot(xx - 128, yy - 128)

    def ring_col(r):
        img = (np.abs(rr - r) < 0.75).astype(np.float64)
        return int(np.argmax(apply_lpt(t, img).sum(axis=0)))

    shift = ring_col(80) - ring_col(40)
    assert abs(shift - math.log(2) / p.rho_step) <= 2


def test_rotation_becomes_row_shift():
    p = PmtParams(in_width=129, in_height=129, rho_size=64, theta_size=72, r_dc=2.0)
    t = build_map(p)
    img = np.zeros((129, 129))
    img[64, 100:120] = 1  # spoke along +x
    a = apply_lpt(t, img)
    b = apply_lpt(t, np.rot90(img))  # counterclockwise quarter turn: spoke along +y (up)
    assert np.argmax(a.sum(axis=1)) == 0
    assert np.argmax(b.sum(axis=1)) == 72 // 4


class TestMapDump:
    def test_round_trip(self, tmp_path, small_params):
        t = build_map(small_params)
        path = tmp_path / "m.lptm"
        write_map_dump(t, path)
        data = path.read_bytes()
        assert data[:4] == b"LPTM"
        assert len(data) == LPTM_HEADER.size + 9 * small_params.rho_size * small_params.theta_size
        assert LPTM_HEADER.size == 20 and LPTM_RECORD.itemsize == 9
        d = read_map_dump(path)
        assert (d.rho_size, d.theta_size, d.in_width, d.in_height) == (40, 36, 64, 48)
        assert np.array_equal(d.x, t.x) and np.array_equal(d.y, t.y) and np.array_equal(d.valid, t.valid)
        assert encode_map_dump(t) == data

    def test_record_order_is_theta_major(self, small_params):
        t = build_map(small_params)
        raw = encode_map_dump(t)
        j, i = 5, 17
        off = LPTM_HEADER.size + 9 * (j * small_params.rho_size + i)
        assert int.from_bytes(raw[off : off + 4], "little") == t.x[j, i]
        assert int.from_bytes(raw[off + 4 : off + 8], "little") == t.y[j, i]
        assert raw[off + 8] == t.valid[j, i]

    def test_larger_rdc_has_more_invalid_entries(self, tmp_path):
        counts = []
        for r in (2.0, 4.0):
            path = tmp_path / f"m{r}.lptm"
            write_map_dump(build_map(PmtParams(in_width=64, in_height=64, rho_size=64, theta_size=32, r_dc=r)), path)
            counts.append(int((~read_map_dump(path).valid).sum()))
        assert counts[1] >= counts[0]

    @pytest.mark.parametrize("cut", [3, 19, 100])
    def test_truncated(self, tmp_path, small_params, cut):
        path = tmp_path / "m.lptm"
        path.write_bytes(encode_map_dump(build_map(small_params))[:cut])
        with pytest.raises(FormatError) as err:
            read_map_dump(path)
        assert "byte offset" in str(err.value)

    def test_bad_magic(self, tmp_path, small_params):
        path = tmp_path / "m.lptm"
        path.write_bytes(b"XXXX" + encode_map_dump(build_map(small_params))[4:])
        with pytest.raises(FormatError):
            read_map_dump(path)
