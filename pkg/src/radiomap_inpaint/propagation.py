"""Line-of-sight geometry, building block term, radio depth map and LDPL fits.

Distances handed to path-loss style formulas are in meters (cells times
``cell_size_m``) and are clamped below at half a cell.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import DegenerateScaleError, Scene


class LdplFitError(ValueError):
    """The log-distance regression is rank deficient."""


@dataclass(frozen=True)
class RayTraversal:
    cells: list[tuple[int, int]]
    lengths: list[float]  # in cells

    @property
    def total(self) -> float:
        return math.fsum(self.lengths)

    def __iter__(self):
        return iter(zip(self.cells, self.lengths))

    def __len__(self):
        return len(self.cells)


def _cell_index(x: float, n: int) -> int:
    return min(max(int(math.floor(x + 0.5)), 0), n - 1)


def traverse(shape, start, end) -> RayTraversal:
    """Walk the grid cells crossed by the segment ``start -> end``.

    ``shape`` may be a grid shape or a :class:`Scene`. Returns each visited
    cell in order together with the exact length of the segment inside it.
    Corner crossings produce a zero-length entry for the side cell.
    """
    if isinstance(shape, Scene):
        shape = shape.shape
    rows, cols = shape
    r0, c0 = float(start[0]), float(start[1])
    r1, c1 = float(end[0]), float(end[1])
    dr, dc = r1 - r0, c1 - c0
    length = math.hypot(dr, dc)
    i, j = _cell_index(r0, rows), _cell_index(c0, cols)
    ei, ej = _cell_index(r1, rows), _cell_index(c1, cols)
    if length == 0.0:
        return RayTraversal([(i, j)], [0.0])

    si = 1 if dr > 0 else -1
    sj = 1 if dc > 0 else -1
    t_max_i = (i + 0.5 * si - r0) / dr if dr != 0 else math.inf
    t_max_j = (j + 0.5 * sj - c0) / dc if dc != 0 else math.inf
    t_delta_i = 1.0 / abs(dr) if dr != 0 else math.inf
    t_delta_j = 1.0 / abs(dc) if dc != 0 else math.inf

    cells, lengths = [], []
    t = 0.0
    while True:
        t_next = min(t_max_i, t_max_j)
        if (i == ei and j == ej) or t_next >= 1.0:
            cells.append((i, j))
            lengths.append((1.0 - t) * length)
            break
        cells.append((i, j))
        lengths.append((t_next - t) * length)
        t = t_next
        if t_max_i <= t_max_j:
            i += si
            t_max_i += t_delta_i
        else:
            j += sj
            t_max_j += t_delta_j
    return RayTraversal(cells, lengths)


def blocked_length_map(buildings: np.ndarray, start, targets: Optional[np.ndarray] = None):
    """Building and total path lengths (cells) from ``start`` to every cell center.

    Vectorized form of :func:`traverse`: all rays advance in lockstep with the
    same arithmetic, so per-ray sums agree with the scalar walk.
    Returns ``(blocked, total)`` arrays shaped like ``buildings`` (or like
    ``targets[0]`` when explicit target coordinates are given).
    """
    buildings = np.asarray(buildings, dtype=bool)
    rows, cols = buildings.shape
    if targets is None:
        tr, tc = np.meshgrid(np.arange(rows, dtype=np.float64),
                             np.arange(cols, dtype=np.float64), indexing="ij")
    else:
        tr, tc = (np.asarray(t, dtype=np.float64) for t in targets)
    out_shape = tr.shape
    tr, tc = tr.ravel(), tc.ravel()

    r0, c0 = float(start[0]), float(start[1])
    dr, dc = tr - r0, tc - c0
    total = np.hypot(dr, dc)
    blocked = np.zeros_like(total)

    i0, j0 = _cell_index(r0, rows), _cell_index(c0, cols)
    ei = np.clip(np.floor(tr + 0.5), 0, rows - 1).astype(np.int64)
    ej = np.clip(np.floor(tc + 0.5), 0, cols - 1).astype(np.int64)
    si = np.where(dr > 0, 1, -1)
    sj = np.where(dc > 0, 1, -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        t_max_i = np.where(dr != 0, (i0 + 0.5 * si - r0) / dr, np.inf)
        t_max_j = np.where(dc != 0, (j0 + 0.5 * sj - c0) / dc, np.inf)
        t_delta_i = np.where(dr != 0, 1.0 / np.abs(dr), np.inf)
        t_delta_j = np.where(dc != 0, 1.0 / np.abs(dc), np.inf)

    # state of the still-walking rays, compacted each step
    idx = np.nonzero(total > 0)[0]
    i = np.full(idx.size, i0, dtype=np.int64)
    j = np.full(idx.size, j0, dtype=np.int64)
    t = np.zeros(idx.size)
    tmi, tmj = t_max_i[idx], t_max_j[idx]
    tdi, tdj = t_delta_i[idx], t_delta_j[idx]
    sii, sjj = si[idx], sj[idx]
    eii, ejj = ei[idx], ej[idx]
    ln = total[idx]
    flat = buildings.ravel()
    while idx.size:
        t_next = np.minimum(tmi, tmj)
        last = ((i == eii) & (j == ejj)) | (t_next >= 1.0)
        t_end = np.where(last, 1.0, t_next)
        inside = flat[i * cols + j]
        seg = (t_end - t) * ln
        np.add.at(blocked, idx[inside], seg[inside])
        keep = ~last
        step_i = keep & (tmi <= tmj)
        step_j = keep & ~(tmi <= tmj)
        i = np.where(step_i, i + sii, i)
        tmi = np.where(step_i, tmi + tdi, tmi)
        j = np.where(step_j, j + sjj, j)
        tmj = np.where(step_j, tmj + tdj, tmj)
        t = t_end
        if not keep.all():
            idx, i, j, t = idx[keep], i[keep], j[keep], t[keep]
            tmi, tmj, tdi, tdj = tmi[keep], tmj[keep], tdi[keep], tdj[keep]
            sii, sjj, eii, ejj, ln = sii[keep], sjj[keep], eii[keep], ejj[keep], ln[keep]
    return blocked.reshape(out_shape), total.reshape(out_shape)


def block_term(scene: Scene, tx_index: int, p) -> float:
    """Fraction of the TX -> p segment length that runs outside buildings."""
    tx = scene.transmitters[tx_index]
    walk = traverse(scene.shape, tx.position, p)
    total = walk.total
    if total == 0.0:
        # zero-length path: clear unless the transmitter sits inside a building
        a, b = walk.cells[0]
        return 0.0 if scene.buildings[a, b] else 1.0
    clear = math.fsum(l for (a, b), l in walk if not scene.buildings[a, b])
    return clear / total


def block_map(scene: Scene, tx_index: int) -> np.ndarray:
    """Block term for every cell of the scene for one transmitter."""
    tx = scene.transmitters[tx_index]
    blocked, total = blocked_length_map(scene.buildings, tx.position)
    rows, cols = scene.shape
    own = scene.buildings[_cell_index(tx.row, rows), _cell_index(tx.col, cols)]
    with np.errstate(divide="ignore", invalid="ignore"):
        b = np.where(total > 0, 1.0 - blocked / total, 0.0 if own else 1.0)
    # fully blocked paths can leave rounding residue of a few ulps
    b[np.abs(b) < 1e-12] = 0.0
    return np.clip(b, 0.0, 1.0)


def distance_map(scene: Scene, tx_index: int, clamp: bool = True) -> np.ndarray:
    """Meters from a transmitter to every cell center."""
    tx = scene.transmitters[tx_index]
    rows, cols = scene.shape
    ii, jj = np.meshgrid(np.arange(rows), np.arange(cols), indexing="ij")
    d = np.hypot(ii - tx.row, jj - tx.col) * scene.cell_size_m
    if clamp:
        d = np.maximum(d, 0.5 * scene.cell_size_m)
    return d


def radio_factor(scene: Scene, tx_index: int, p, normal, beta: float = 2.0) -> float:
    """Distance-decayed alignment of the propagation direction with a normal."""
    n = np.asarray(normal, dtype=np.float64)
    nn = float(np.hypot(n[0], n[1]))
    if nn <= 0:
        raise ValueError("normal must be non-zero")
    tx = scene.transmitters[tx_index]
    v = np.array([p[0] - tx.row, p[1] - tx.col], dtype=np.float64)
    vn = float(np.hypot(v[0], v[1]))
    if vn == 0.0:
        return 0.0
    d = max(vn * scene.cell_size_m, 0.5 * scene.cell_size_m)
    return d ** (-beta) * abs(float(v @ n)) / (vn * nn)


@dataclass(frozen=True)
class LdplFit:
    """``r ~ theta - epsilon * log10(d_m)`` fitted over observed cells."""

    theta: float
    epsilon: float
    rmse: float
    n_samples: int
    log_base: int = 10

    def predict(self, d_m):
        return self.theta - self.epsilon * np.log10(d_m)


@dataclass(frozen=True)
class JointLdplFit:
    """``r ~ intercept - sum_i epsilon_i * log10(d_i)``."""

    intercept: float
    epsilons: tuple[float, ...]
    rmse: float
    n_samples: int
    log_base: int = 10

    def predict(self, log_distances: np.ndarray) -> np.ndarray:
        """``log_distances`` has shape (n_tx, ...)."""
        eps = np.asarray(self.epsilons).reshape((-1,) + (1,) * (log_distances.ndim - 1))
        return self.intercept - (eps * log_distances).sum(axis=0)


def _lstsq(features: np.ndarray, y: np.ndarray, what: str):
    if features.shape[0] < features.shape[1]:
        raise LdplFitError(f"{what}: {features.shape[0]} samples for {features.shape[1]} unknowns")
    coef, _, rank, sv = np.linalg.lstsq(features, y, rcond=None)
    if rank < features.shape[1] or sv[-1] <= sv[0] * 1e-12:
        raise LdplFitError(f"{what}: observed cells lack spatial spread in distance (rank {rank})")
    resid = y - features @ coef
    return coef, float(np.sqrt(np.mean(resid ** 2)))


def voronoi_regions(scene: Scene) -> np.ndarray:
    """Index of the nearest transmitter for every cell."""
    d = np.stack([distance_map(scene, k, clamp=False) for k in range(len(scene.transmitters))])
    return np.argmin(d, axis=0)


def ldpl_fit(values, observed, scene: Scene, tx_index: int = 0, region: Optional[np.ndarray] = None) -> LdplFit:
    """Least-squares log-distance fit of observed values for one transmitter.

    ``region`` optionally restricts the fit to a subset of cells.
    """
    values = np.asarray(values, dtype=np.float64)
    sel = np.asarray(observed, dtype=bool)
    if region is not None:
        sel = sel & np.asarray(region, dtype=bool)
    logd = np.log10(distance_map(scene, tx_index))[sel]
    if np.unique(logd).size < 2:
        raise LdplFitError("log-distance fit needs at least two distinct distances")
    x = np.column_stack([np.ones_like(logd), -logd])
    (theta, eps), rmse = _lstsq(x, values[sel], "log-distance fit")
    return LdplFit(float(theta), float(eps), rmse, int(sel.sum()))


def ldpl_fit_joint(values, observed, scene: Scene) -> JointLdplFit:
    """Joint regression on ``[1, log10 d_1, ..., log10 d_Nt]`` over observed cells."""
    scene.require_transmitters()
    values = np.asarray(values, dtype=np.float64)
    sel = np.asarray(observed, dtype=bool)
    logd = np.stack([np.log10(distance_map(scene, k))[sel] for k in range(len(scene.transmitters))])
    x = np.column_stack([np.ones(sel.sum())] + [-row for row in logd])
    coef, rmse = _lstsq(x, values[sel], "joint log-distance fit")
    return JointLdplFit(float(coef[0]), tuple(float(c) for c in coef[1:]), rmse, int(sel.sum()))


@dataclass(frozen=True)
class DepthMap:
    values: np.ndarray  # normalized to [0, 1]
    raw: np.ndarray
    degenerate: bool = False

    @property
    def shape(self):
        return self.values.shape


def depth_map(scene: Scene, model: str = "idw", sigma: float = 0.01, values=None, observed=None,
              strict: bool = False, min_samples: int = 10) -> DepthMap:
    """Radio depth map: min-max normalized sum of per-TX decay times block term.

    ``model`` is ``"idw"`` (decay ``d^-sigma`` scaled by linear TX power
    relative to the strongest TX) or ``"ldpl"`` (per-TX log-distance fits from
    the observed radiomap, or the transmitters' preset ``params``).
    A zero-span raw map yields an all-zero depth map flagged ``degenerate``;
    with ``strict=True`` it raises :class:`DegenerateScaleError` instead.
    """
    scene.require_transmitters()
    n_tx = len(scene.transmitters)
    raw = np.zeros(scene.shape)
    if model == "idw":
        p_ref = max(tx.power_dbm for tx in scene.transmitters)
        for k, tx in enumerate(scene.transmitters):
            e = 10.0 ** ((tx.power_dbm - p_ref) / 10.0) * distance_map(scene, k) ** (-sigma)
            raw += e * block_map(scene, k)
    elif model == "ldpl":
        regions = voronoi_regions(scene) if n_tx > 1 else None
        for k, tx in enumerate(scene.transmitters):
            if tx.params is not None:
                theta, eps = tx.params
            else:
                if values is None or observed is None:
                    raise ValueError("LDPL depth map needs a radiomap and mask to fit against")
                region = None if regions is None else regions == k
                sel = np.asarray(observed, dtype=bool) if region is None else np.asarray(observed, bool) & region
                if sel.sum() < min_samples:
                    raise LdplFitError(f"transmitter {k}: only {int(sel.sum())} observed cells in its region")
                fit = ldpl_fit(values, observed, scene, k, region=region)
                theta, eps = fit.theta, fit.epsilon
            e = theta - eps * np.log10(distance_map(scene, k))
            raw += e * block_map(scene, k)
    else:
        raise ValueError(f"unknown depth model {model!r}")

    lo, hi = float(raw.min()), float(raw.max())
    if not hi > lo:
        if strict:
            raise DegenerateScaleError("depth map has zero span")
        return DepthMap(np.zeros_like(raw), raw, degenerate=True)
    return DepthMap((raw - lo) / (hi - lo), raw)


def per_tx_weights(scene: Scene, weights: Optional[Sequence[float]] = None) -> np.ndarray:
    n = len(scene.transmitters)
    if weights is None:
        return np.ones(n)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"expected {n} transmitter weights, got {w.shape}")
    return w
