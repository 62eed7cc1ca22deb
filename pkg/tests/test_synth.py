import numpy as np
import pytest

from radiomap_inpaint.synth import (ScenarioSpec, ShadowSpec, TxSpec, generate, make_mask, random_scenario,
                                    tx_power_map)

QUIET = ShadowSpec(enabled=False)


def open_spec(txs, buildings=(), **kw):
    return ScenarioSpec(40, 40, kw.pop("cell_size_m", 1.0), buildings, txs, shadowing=QUIET, **kw)


def test_ten_gamma_db_per_decade():
    spec = open_spec((TxSpec((0.0, 0.0), 30.0, 2.7),))
    p = tx_power_map(spec, 0)
    assert p[0, 3] - p[0, 30] == pytest.approx(27.0, abs=1e-9)
    assert p[0, 1] == pytest.approx(30.0, abs=1e-12)


def test_two_colocated_transmitters_add_3db():
    one, _ = generate(open_spec((TxSpec((10.0, 10.0)),)))
    two, _ = generate(open_spec((TxSpec((10.0, 10.0)), TxSpec((10.0, 10.0)))))
    assert np.allclose(two.data - one.data, 10 * np.log10(2), atol=1e-12)


def test_wall_attenuation():
    tx = (TxSpec((5.0, 0.0), 40.0, 2.0),)
    free, _ = generate(open_spec(tx, wall_attenuation_db_per_m=1.0))
    wall, _ = generate(open_spec(tx, buildings=((0, 5, 11, 10),), wall_attenuation_db_per_m=1.0))
    assert free.data[5, 20] - wall.data[5, 20] == pytest.approx(10.0, abs=1e-9)
    # cells the ray never crosses the building for are unaffected
    assert wall.data[30, 2] == free.data[30, 2]


def test_attenuation_monotone():
    spec = random_scenario(4, 48, 48, n_tx=2)
    maps = []
    for a in (0.0, 0.5, 2.0):
        s = ScenarioSpec(spec.rows, spec.cols, spec.cell_size_m, spec.buildings, spec.transmitters, a,
                         spec.shadowing, spec.seed)
        maps.append(generate(s)[0].data)
    assert (maps[1] <= maps[0] + 1e-12).all() and (maps[2] <= maps[1] + 1e-12).all()
    assert (maps[2] < maps[0]).any()


def test_deterministic_and_json_roundtrip():
    spec = random_scenario(11, 64, 64)
    a, sa = generate(spec)
    b, sb = generate(ScenarioSpec.from_json(spec.to_json()))
    assert np.array_equal(a.data, b.data) and np.array_equal(sa.buildings, sb.buildings)
    assert random_scenario(11, 64, 64) == spec and random_scenario(12, 64, 64) != spec


def test_shadowing_statistics():
    spec = ScenarioSpec(64, 64, 4.0, (), (TxSpec((1.0, 1.0)),), shadowing=ShadowSpec(True, 12.0, 5.0), seed=3)
    from radiomap_inpaint.synth import shadow_field
    s = shadow_field(spec)
    assert s.mean() == pytest.approx(0.0, abs=1e-12) and s.std() == pytest.approx(5.0)


def test_spec_validation():
    with pytest.raises(ValueError):
        ScenarioSpec(10, 10, buildings=((5, 5, 6, 1),))
    with pytest.raises(ValueError):
        ScenarioSpec(10, 10, transmitters=(TxSpec((12.0, 0.0)),))
    with pytest.raises(ValueError):
        ScenarioSpec.from_dict({"rows": 4, "cols": 4, "bogus": 1})


def test_make_mask():
    m = make_mask((64, 64), rect=(10, 10, 20, 20))
    assert m.missing_count() == 400 and not m.observed[10:30, 10:30].any()
    with pytest.raises(ValueError):
        make_mask((8, 8), rect=(0, 0, 8, 8))
    with pytest.raises(ValueError):
        make_mask((8, 8), rect=(4, 4, 5, 2))
    r = make_mask((64, 64), n_regions=4, size=8, seed=2)
    assert r.missing_count() == 4 * 64
    assert np.array_equal(r.observed, make_mask((64, 64), n_regions=4, size=8, seed=2).observed)
