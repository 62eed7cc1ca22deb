"""Fill-front priority terms.

All per-cell kernels take plain arrays: ``values`` (float grid), ``observed``
(bool grid, current known region) and, where needed, the confidence field.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import ndimage

from .core import window_bounds
from .propagation import block_map, radio_factor

DATA_FLOOR = 1e-3


@dataclass(frozen=True)
class PriorityRecord:
    center: tuple[int, int]
    confidence: float
    data: float
    propagation: float
    priority: float


def initial_confidence(observed) -> np.ndarray:
    return np.asarray(observed, dtype=np.float64).copy()


def confidence(field, observed, center, n: int) -> float:
    """Mean confidence of the observed cells of the window, over the full n*n."""
    r0, r1, c0, c1 = window_bounds(center, n, field.shape)
    obs = observed[r0:r1, c0:c1]
    return float(field[r0:r1, c0:c1][obs].sum()) / (n * n)


def boundary_normals(observed) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient of the missing-region indicator.

    Cells where that gradient vanishes fall back to the unit vector pointing
    at the nearest observed cell.
    """
    observed = np.asarray(observed, dtype=bool)
    ind = np.pad((~observed).astype(np.float64), 1, mode="edge")
    nr = 0.5 * (ind[2:, 1:-1] - ind[:-2, 1:-1])
    nc = 0.5 * (ind[1:-1, 2:] - ind[1:-1, :-2])
    zero = (nr == 0) & (nc == 0) & ~observed
    if zero.any():
        _, (ir, ic) = ndimage.distance_transform_edt(~observed, return_indices=True)
        rr, cc = np.nonzero(zero)
        vr = (ir[rr, cc] - rr).astype(np.float64)
        vc = (ic[rr, cc] - cc).astype(np.float64)
        norm = np.hypot(vr, vc)
        norm[norm == 0] = 1.0
        nr[rr, cc] = vr / norm
        nc[rr, cc] = vc / norm
    return nr, nc


def observed_gradient(values, observed) -> tuple[np.ndarray, np.ndarray]:
    """Per-axis finite differences using observed cells only.

    Central difference when both neighbors are observed, one-sided when only
    one is, zero otherwise. Missing cells get zero.
    """
    values = np.asarray(values, dtype=np.float64)
    observed = np.asarray(observed, dtype=bool)
    out = []
    for axis in (0, 1):
        v = np.moveaxis(values, axis, 0)
        o = np.moveaxis(observed, axis, 0)
        g = np.zeros_like(v)
        fwd = np.zeros_like(v)
        bwd = np.zeros_like(v)
        has_f = np.zeros(v.shape, dtype=bool)
        has_b = np.zeros(v.shape, dtype=bool)
        fwd[:-1] = v[1:] - v[:-1]
        has_f[:-1] = o[1:] & o[:-1]
        bwd[1:] = v[1:] - v[:-1]
        has_b[1:] = o[1:] & o[:-1]
        both = has_f & has_b
        g[both] = 0.5 * (fwd[both] + bwd[both])
        g[has_f & ~has_b] = fwd[has_f & ~has_b]
        g[has_b & ~has_f] = bwd[has_b & ~has_f]
        g[~o] = 0.0
        out.append(np.moveaxis(g, 0, axis))
    return out[0], out[1]


def _max_gradient(gr, gc, observed, center, n):
    r0, r1, c0, c1 = window_bounds(center, n, observed.shape)
    wr, wc = gr[r0:r1, c0:c1], gc[r0:r1, c0:c1]
    mag = np.where(observed[r0:r1, c0:c1], wr * wr + wc * wc, -1.0)
    k = int(np.argmax(mag))
    if mag.flat[k] <= 0:
        return 0.0, 0.0
    return float(wr.flat[k]), float(wc.flat[k])


def _data_from(grad, normal) -> float:
    # isophote is the gradient rotated by 90 degrees
    sr, sc = -grad[1], grad[0]
    ns = np.hypot(sr, sc)
    nn = np.hypot(normal[0], normal[1])
    if ns == 0 or nn == 0:
        return DATA_FLOOR
    d = abs(sr * normal[0] + sc * normal[1]) / (ns * nn)
    return float(min(max(d, DATA_FLOOR), 1.0))


def data_scalar(values, observed, center, n: int, normal=None, gradient=None) -> float:
    """Absolute cosine between the strongest isophote in the window and the front normal."""
    observed = np.asarray(observed, dtype=bool)
    if gradient is None:
        gradient = observed_gradient(values, observed)
    if normal is None:
        nr, nc = boundary_normals(observed)
        normal = (nr[center], nc[center])
    g = _max_gradient(gradient[0], gradient[1], observed, center, n)
    return _data_from(g, normal)


def propagation_term(scene, center, normal, beta: float, block_maps: Sequence[np.ndarray],
                     weights: Optional[Sequence[float]] = None) -> float:
    """Weighted sum over transmitters of block term times radio factor."""
    if normal[0] == 0 and normal[1] == 0:
        return 0.0
    total = 0.0
    for k in range(len(scene.transmitters)):
        w = 1.0 if weights is None else float(weights[k])
        b = float(block_maps[k][center])
        if b == 0.0 or w == 0.0:
            continue
        total += w * b * radio_factor(scene, k, center, normal, beta)
    return total


def patch_priority_small(scene, values, observed, conf_field, center, n: int, beta: float = 2.0,
                         block_maps=None, weights=None, normal=None, gradient=None,
                         use_propagation: bool = True) -> PriorityRecord:
    """Confidence x data x propagation priority of a front cell."""
    observed = np.asarray(observed, dtype=bool)
    if normal is None:
        nr, nc = boundary_normals(observed)
        normal = (float(nr[center]), float(nc[center]))
    c = confidence(conf_field, observed, center, n)
    d = data_scalar(values, observed, center, n, normal=normal, gradient=gradient)
    if use_propagation:
        if block_maps is None:
            block_maps = [block_map(scene, k) for k in range(len(scene.transmitters))]
        prop = propagation_term(scene, center, normal, beta, block_maps, weights)
    else:
        prop = 1.0
    return PriorityRecord(tuple(center), c, d, prop, c * d * prop)


def depth_factor(depth, observed, center, n: int) -> float:
    """Smoothness of the depth map over the observed cells of the window."""
    r0, r1, c0, c1 = window_bounds(center, n, observed.shape)
    w = np.asarray(depth)[r0:r1, c0:c1][observed[r0:r1, c0:c1]]
    if w.size == 0:
        raise ValueError(f"window at {center} has no observed cells")
    spread = float(((w - w.mean()) ** 2).sum())
    return w.size / (w.size + spread)


def patch_priority_template(depth, values, observed, conf_field, center, n: int,
                            normal=None, gradient=None) -> PriorityRecord:
    """Confidence x data x depth-factor priority of a front cell."""
    observed = np.asarray(observed, dtype=bool)
    if normal is None:
        nr, nc = boundary_normals(observed)
        normal = (float(nr[center]), float(nc[center]))
    c = confidence(conf_field, observed, center, n)
    d = data_scalar(values, observed, center, n, normal=normal, gradient=gradient)
    v = depth_factor(depth, observed, center, n)
    return PriorityRecord(tuple(center), c, d, v, c * d * v)


def update_confidence(field: np.ndarray, filled: np.ndarray, value: float, observed=None) -> np.ndarray:
    """Assign ``value`` to newly filled cells.

    Cells already observed before the fill (``observed``) keep their confidence.
    """
    filled = np.asarray(filled, dtype=bool)
    if observed is not None:
        filled = filled & ~np.asarray(observed, dtype=bool)
    out = np.array(field, dtype=np.float64)
    out[filled] = value
    return out
