import numpy as np
import pytest

from radiomap_inpaint.core import RegionMask, ScalarGrid
from radiomap_inpaint.io import (FormatError, mse, ne, read_grid, read_mask, render_pgm, write_grid,
                                 write_mask)


def test_roundtrip_bit_exact(tmp_path, rng):
    v = rng.normal(scale=40, size=(7, 9)) - 60
    v[0, 0] = 1e-300
    v[1, 1] = -0.1
    write_grid(tmp_path / "g.rmg", v)
    g = read_grid(tmp_path / "g.rmg")
    assert g.complete and np.array_equal(g.data, v) and g.units == "dBm"


def test_single_cell_and_missing(tmp_path):
    write_grid(tmp_path / "one.rmg", np.array([[3.5]]), units="normalized")
    g = read_grid(tmp_path / "one.rmg")
    assert g.shape == (1, 1) and g[0, 0] == 3.5 and g.units == "normalized"
    with pytest.raises(FormatError, match="units"):
        write_grid(tmp_path / "dB.rmg", np.array([[3.5]]), units="dB")
    obs = np.array([[True, False], [True, True]])
    write_grid(tmp_path / "na.rmg", np.array([[1.0, np.nan], [2.0, 3.0]]), observed=obs)
    text = (tmp_path / "na.rmg").read_text()
    assert text.splitlines()[1] == "1 NA"
    h = read_grid(tmp_path / "na.rmg")
    assert np.array_equal(h.mask().observed, obs)


@pytest.mark.parametrize("body,msg", [
    ("RMG2 1 1 dBm\n0\n", "header"),
    ("RMG1 2 2 dBm\n1 2\n", "rows"),
    ("RMG1 1 2 dBm\n1 2 3\n", "values"),
    ("RMG1 1 1 dBm\nabc\n", "malformed"),
    ("RMG1 1 1 dBm\ninf\n", "non-finite"),
    ("RMG1 1 1 dBm\nnan\n", "non-finite"),
    ("RMG1 x 1 dBm\n1\n", "dimensions"),
    ("RMG1 1 1 furlongs\n1\n", "units"),
    ("", "empty"),
])
def test_malformed(tmp_path, body, msg):
    p = tmp_path / "bad.rmg"
    p.write_text(body)
    with pytest.raises(FormatError, match=msg):
        read_grid(p)


def test_write_rejects_non_finite(tmp_path):
    with pytest.raises(FormatError):
        write_grid(tmp_path / "x.rmg", np.array([[np.inf]]))


def test_mask_roundtrip(tmp_path, rng):
    obs = rng.random((5, 6)) < 0.5
    obs[0, 0] = True
    write_mask(tmp_path / "m.rmg", RegionMask(obs))
    assert np.array_equal(read_mask(tmp_path / "m.rmg").observed, obs)
    (tmp_path / "b.rmg").write_text("RMG1 1 2 mask\n1 2\n")
    with pytest.raises(FormatError):
        read_mask(tmp_path / "b.rmg")
    with pytest.raises(FormatError, match="not a mask"):
        write_grid(tmp_path / "g.rmg", np.ones((1, 1)))
        read_mask(tmp_path / "g.rmg")


def test_pgm_golden(tmp_path):
    g = np.array([[0.0, 1.0, 2.0], [3.0, 4.0, 5.0]])
    blob = render_pgm(g, tmp_path / "a.pgm")
    assert blob == b"P5\n3 2\n255\n" + bytes([0, 51, 102, 153, 204, 255])
    assert (tmp_path / "a.pgm").read_bytes() == blob


def test_pgm_fixed_range_and_missing(tmp_path):
    g = ScalarGrid(np.array([[-10.0, 0.0, 10.0, 20.0]]), observed=np.array([[True, True, True, False]]))
    blob = render_pgm(g, tmp_path / "b.pgm", range_=(-5, 5))
    assert blob[-4:] == bytes([0, 128, 255, 0])
    with pytest.raises(ValueError):
        render_pgm(np.full((2, 2), 7.0), tmp_path / "c.pgm")
    flat = render_pgm(np.full((2, 2), 7.0), tmp_path / "d.pgm", range_=(6, 8))
    assert flat[-4:] == bytes([128] * 4)


def test_metrics():
    t = np.array([[1.0, 2.0], [3.0, 4.0]])
    e = np.array([[1.0, 2.0], [5.0, 4.0]])
    region = np.array([[False, False], [True, True]])
    assert mse(t, e, region) == 2.0
    assert ne(t, e, region) == 4.0 / 25.0
    assert mse(t, e, RegionMask(~region)) == 2.0
    assert mse(t, t) == 0.0
    with pytest.raises(ValueError):
        mse(t, e, np.zeros((2, 2), bool))
    with pytest.raises(ValueError):
        ne(np.zeros((2, 2)), e)
