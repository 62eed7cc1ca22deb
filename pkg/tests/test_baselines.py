import numpy as np
import pytest
from scipy.interpolate import RBFInterpolator

from radiomap_inpaint.baselines import RbfModel, idw_interp, idw_predict, mbi, mean_fill, rbf_interp
from radiomap_inpaint.synth import ScenarioSpec, ShadowSpec, TxSpec, generate, make_mask, random_scenario


def ldpl_case(buildings=(), shadow=ShadowSpec(enabled=False)):
    spec = ScenarioSpec(48, 48, 2.0, buildings, (TxSpec((5.0, 7.0), 40.0, 2.3),), shadowing=shadow)
    truth, scene = generate(spec)
    return truth.data, scene, make_mask((48, 48), rect=(20, 20, 16, 16))


def test_mbi_recovers_noiseless_ldpl():
    truth, scene, mask = ldpl_case()
    est = mbi(truth, mask.observed, scene)
    assert np.mean((est - truth)[mask.missing] ** 2) < 1e-10


def test_mbi_misses_building_loss():
    truth, scene, mask = ldpl_case(buildings=((10, 10, 12, 12),))
    est = mbi(truth, mask.observed, scene)
    assert np.mean((est - truth)[mask.missing] ** 2) > 1e-3


def test_mbi_needs_scene(rng):
    with pytest.raises(ValueError):
        mbi(rng.normal(size=(4, 4)), np.ones((4, 4), bool))


def test_constant_field_reproduced():
    v = np.full((12, 12), -70.0)
    mask = make_mask((12, 12), rect=(3, 3, 5, 5))
    for f in (idw_interp, rbf_interp, mean_fill):
        assert np.allclose(f(v, mask.observed), -70.0, atol=1e-8)


def test_observed_cells_untouched(rng):
    v = rng.normal(size=(16, 16))
    mask = make_mask((16, 16), rect=(4, 4, 6, 6))
    for f in (idw_interp, rbf_interp, mean_fill):
        out = f(v, mask.observed)
        assert np.array_equal(out[mask.observed], v[mask.observed])


def test_idw_exact_at_samples_and_midpoint():
    pts = np.array([[0.0, 0.0], [0.0, 2.0]])
    s = np.array([0.0, 10.0])
    assert np.array_equal(idw_predict(pts, s, pts), s)
    assert idw_predict(pts, s, np.array([[0.0, 1.0]]))[0] == pytest.approx(5.0)


def test_idw_all_points_shepard_oracle(rng):
    pts = rng.random((30, 2)) * 10
    s = rng.normal(size=30)
    q = rng.random((20, 2)) * 10
    for p in (1.0, 2.0, 3.5):
        d = np.linalg.norm(q[:, None] - pts[None], axis=2)
        w = d ** -p
        ref = (w * s).sum(1) / w.sum(1)
        assert np.allclose(idw_predict(pts, s, q, p, k=30), ref, atol=1e-12)


def test_idw_within_sample_bounds(rng):
    v = rng.normal(size=(20, 20))
    mask = make_mask((20, 20), rect=(5, 5, 8, 8))
    out = idw_interp(v, mask.observed, k_neighbors=10)
    lo, hi = v[mask.observed].min(), v[mask.observed].max()
    assert out.min() >= lo and out.max() <= hi


def test_rbf_reproduces_centers(rng):
    c = rng.random((40, 2)) * 20
    y = rng.normal(size=40)
    for kind in ("thin_plate", "gaussian"):
        m = RbfModel(c, y, kind, scale=3.0, ridge=0.0)
        assert np.allclose(m(c), y, atol=1e-8)


def test_thin_plate_linear_exact(rng):
    c = rng.random((25, 2)) * 10
    f = lambda x: 3.0 - 0.5 * x[:, 0] + 2.0 * x[:, 1]
    q = rng.random((50, 2)) * 10
    assert np.allclose(RbfModel(c, f(c), ridge=0.0)(q), f(q), atol=1e-8)


def test_thin_plate_matches_scipy(rng):
    c = rng.random((60, 2)) * 30
    y = np.sin(c[:, 0] / 5) + np.cos(c[:, 1] / 7)
    q = rng.random((40, 2)) * 30
    ref = RBFInterpolator(c, y, kernel="thin_plate_spline", degree=1)(q)
    assert np.allclose(RbfModel(c, y, ridge=0.0)(q), ref, atol=1e-8)


def test_gaussian_decays_far_away(rng):
    c = rng.random((10, 2)) * 5
    m = RbfModel(c, rng.normal(size=10), "gaussian", scale=1.0, ridge=0.0)
    far = m(np.array([[500.0, 500.0]]))[0]
    # only the linear tail survives
    assert far == pytest.approx(m._poly(np.array([[500.0, 500.0]])) @ m.poly, abs=1e-12)


def test_rbf_subsampling_deterministic():
    truth, _ = generate(random_scenario(2, 64, 64))
    mask = make_mask((64, 64), rect=(20, 20, 16, 16))
    a = rbf_interp(truth, mask.observed, centers_cap=500, seed=4)
    assert np.array_equal(a, rbf_interp(truth, mask.observed, centers_cap=500, seed=4))
    with pytest.raises(ValueError):
        rbf_interp(truth, mask.observed, kernel="cubic")


def test_mean_fill(rng):
    v = rng.normal(size=(6, 6))
    obs = rng.random((6, 6)) < 0.5
    obs[0, 0] = True
    out = mean_fill(v, obs)
    assert np.allclose(out[~obs], v[obs].mean())
