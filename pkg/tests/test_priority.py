import math

import numpy as np
import pytest

from radiomap_inpaint.core import Scene, Transmitter, front_mask
from radiomap_inpaint.priority import (DATA_FLOOR, boundary_normals, confidence, data_scalar, depth_factor,
                                       initial_confidence, observed_gradient, patch_priority_small,
                                       patch_priority_template, update_confidence)
from radiomap_inpaint.propagation import block_term, radio_factor


def test_confidence_examples():
    obs = np.ones((7, 7), bool)
    f = initial_confidence(obs)
    assert confidence(f, obs, (3, 3), 3) == 1.0
    obs2 = ~np.pad(np.ones((3, 3), bool), 2)
    assert confidence(initial_confidence(obs2), obs2, (3, 3), 3) == 0.0
    obs3 = np.ones((3, 3), bool)
    obs3[0, :] = False
    obs3[1, 0] = False
    assert confidence(initial_confidence(obs3), obs3, (1, 1), 3) == pytest.approx(5 / 9)


def test_confidence_clipped_divides_by_full_window():
    obs = np.ones((5, 5), bool)
    assert confidence(initial_confidence(obs), obs, (0, 0), 3) == pytest.approx(4 / 9)


def test_data_scalar_aligned_isophote():
    # values vary along columns only, so the isophote runs along rows; a
    # horizontal boundary (hole below) has a normal along rows too
    v = np.tile(np.arange(9.0), (9, 1))
    obs = np.ones((9, 9), bool)
    obs[5:, :] = False
    nr, nc = boundary_normals(obs)
    assert data_scalar(v, obs, (5, 4), 3, normal=(nr[5, 4], nc[5, 4])) == pytest.approx(1.0)


def test_data_scalar_constant_is_floor():
    obs = np.ones((9, 9), bool)
    obs[4:, 4:] = False
    assert data_scalar(np.full((9, 9), 3.0), obs, (4, 4), 3) == DATA_FLOOR


def test_data_scalar_ramp_analytic():
    # ramp with gradient (a, b) per cell; vertical boundary: hole on the right
    a, b = 0.3, 1.1
    ii, jj = np.mgrid[0:11, 0:11]
    v = a * ii + b * jj
    obs = jj < 6
    nr, nc = boundary_normals(obs)
    assert (nr[5, 6], nc[5, 6]) == (0.0, 0.5)
    # isophote (-b, a) against normal (0, 1)
    expect = abs(a) / math.hypot(a, b)
    assert data_scalar(v, obs, (5, 6), 5) == pytest.approx(expect, abs=1e-6)


def test_data_scalar_scale_invariant(rng):
    v = rng.normal(size=(12, 12))
    obs = np.ones((12, 12), bool)
    obs[4:9, 3:10] = False
    cells = list(zip(*np.nonzero(front_mask(obs))))
    d1 = [data_scalar(v, obs, c, 5) for c in cells]
    d2 = [data_scalar(7.5 * v, obs, c, 5) for c in cells]
    assert np.argmax(d1) == np.argmax(d2)
    assert np.allclose(d1, d2)


def test_observed_gradient_ignores_missing():
    v = np.array([[0.0, 1.0, 100.0, 3.0]])
    obs = np.array([[True, True, False, True]])
    gr, gc = observed_gradient(np.vstack([v, v]), np.vstack([obs, obs]))
    assert gc[0, 0] == 1.0 and gc[0, 1] == 1.0 and gc[0, 2] == 0.0 and gc[0, 3] == 0.0


def test_priority_small_unit_factors():
    # TX straight above p, boundary normal pointing down (along rows), d = 1
    v = np.tile(np.arange(5.0), (5, 1))
    obs = np.zeros((5, 5), bool)
    obs[:2, :] = True
    s = Scene(np.zeros((5, 5), bool), 1.0, (Transmitter((1.0, 2.0)),))
    conf = np.ones((5, 5))  # pretend full confidence around the front
    rec = patch_priority_small(s, v, obs, conf, (2, 2), 3, beta=1.0, normal=(1.0, 0.0))
    assert rec.propagation == pytest.approx(1.0)
    assert rec.data == pytest.approx(1.0)
    assert rec.confidence == pytest.approx(3 / 9)
    full = np.ones((5, 5), bool)
    rec = patch_priority_small(s, v, full, conf, (2, 2), 3, beta=1.0, normal=(1.0, 0.0))
    assert rec.priority == pytest.approx(1.0)


def test_priority_small_blocked_is_zero():
    b = np.ones((6, 6), bool)
    s = Scene(b, 1.0, (Transmitter((0.0, 0.0)),))
    v = np.tile(np.arange(6.0), (6, 1))
    obs = np.ones((6, 6), bool)
    obs[3:, 3:] = False
    rec = patch_priority_small(s, v, obs, initial_confidence(obs), (3, 3), 3)
    assert rec.priority == 0.0


def test_priority_small_two_tx_product(rng):
    b = rng.random((16, 16)) < 0.2
    s = Scene(b, 2.0, (Transmitter((1.0, 2.0)), Transmitter((14.0, 13.5))))
    v = rng.normal(size=(16, 16))
    obs = np.ones((16, 16), bool)
    obs[5:11, 6:12] = False
    conf = initial_confidence(obs)
    nr, nc = boundary_normals(obs)
    for c in zip(*np.nonzero(front_mask(obs))):
        normal = (nr[c], nc[c])
        rec = patch_priority_small(s, v, obs, conf, c, 5, beta=2.0)
        prop = sum(block_term(s, k, c) * radio_factor(s, k, c, normal, 2.0) for k in range(2))
        cf = confidence(conf, obs, c, 5)
        d = data_scalar(v, obs, c, 5)
        assert rec.propagation == pytest.approx(prop, rel=1e-9, abs=1e-15)
        assert abs(rec.priority - cf * d * prop) <= 1e-12
        assert rec.priority == rec.confidence * rec.data * rec.propagation


def test_depth_factor_examples():
    obs = np.zeros((3, 3), bool)
    obs[0, :2] = obs[1, :2] = True
    w = np.zeros((3, 3))
    assert depth_factor(w, obs, (1, 1), 3) == 1.0
    w[1, :2] = 1.0
    assert depth_factor(w, obs, (1, 1), 3) == pytest.approx(0.8)
    with pytest.raises(ValueError):
        depth_factor(w, np.zeros((3, 3), bool), (1, 1), 3)


def test_depth_factor_monotone_in_count():
    # both windows have a spread sum of 1, over 2 and over 4 observed cells
    w = np.zeros((5, 5))
    w[0, 1] = math.sqrt(2.0)
    two = np.zeros((5, 5), bool)
    two[0, :2] = True
    w4 = np.zeros((5, 5))
    w4[0, 2:4] = 1.0
    four = np.zeros((5, 5), bool)
    four[0, :4] = True
    assert depth_factor(w, two, (2, 2), 5) == pytest.approx(2 / 3)
    assert depth_factor(w4, four, (2, 2), 5) == pytest.approx(4 / 5)


def test_template_priority_product(rng):
    w = rng.random((12, 12))
    v = rng.normal(size=(12, 12))
    obs = np.ones((12, 12), bool)
    obs[4:8, 4:8] = False
    conf = initial_confidence(obs)
    for c in zip(*np.nonzero(front_mask(obs))):
        rec = patch_priority_template(w, v, obs, conf, c, 5)
        ref = confidence(conf, obs, c, 5) * data_scalar(v, obs, c, 5) * depth_factor(w, obs, c, 5)
        assert abs(rec.priority - ref) <= 1e-12


def test_template_priority_extremes():
    obs = np.ones((5, 5), bool)
    obs[2, 2] = False
    v = np.tile(np.arange(5.0), (5, 1))
    zero = np.zeros((5, 5))
    assert patch_priority_template(zero, v, obs, zero, (2, 2), 3, normal=(0.0, 1.0)).priority == 0.0
    rec = patch_priority_template(zero, v, np.ones((5, 5), bool), np.ones((5, 5)), (2, 2), 3,
                                  normal=(1.0, 0.0))
    assert rec.priority == pytest.approx(1.0)


def test_update_confidence():
    obs = np.zeros((4, 4), bool)
    obs[0] = True
    f = initial_confidence(obs)
    filled = np.zeros((4, 4), bool)
    filled[:2, :2] = True
    out = update_confidence(f, filled, 0.6, observed=obs)
    assert (out[1, :2] == 0.6).all()
    assert (out[0] == 1.0).all()
