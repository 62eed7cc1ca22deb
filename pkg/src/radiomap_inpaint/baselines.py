"""Comparison methods: log-distance regression, IDW, RBF and mean fill.

Every method returns a full array whose observed cells are the input values
and whose missing cells hold the estimate.
"""
from __future__ import annotations

import numpy as np
from scipy.spatial import cKDTree

from .core import Scene, as_arrays
from .propagation import distance_map, ldpl_fit_joint
from .synth import make_rng


class RbfFitError(np.linalg.LinAlgError):
    pass


def _cells(mask: np.ndarray) -> np.ndarray:
    return np.argwhere(mask).astype(np.float64)


def mbi(radiomap, mask=None, scene: Scene = None) -> np.ndarray:
    """Joint log-distance fit over all transmitters, evaluated on the missing cells."""
    values, obs = as_arrays(radiomap, mask)
    if scene is None:
        raise ValueError("MBI needs a scene")
    fit = ldpl_fit_joint(values, obs, scene)
    miss = ~obs
    logd = np.stack([np.log10(distance_map(scene, k))[miss] for k in range(len(scene.transmitters))])
    out = values.copy()
    out[miss] = fit.predict(logd)
    return out


def idw_predict(points: np.ndarray, samples: np.ndarray, queries: np.ndarray, power: float = 2.0,
                k: int = 32) -> np.ndarray:
    """Shepard interpolation from the ``k`` nearest sample points.

    A query that coincides with a sample point takes that sample's value.
    """
    points = np.asarray(points, dtype=np.float64)
    samples = np.asarray(samples, dtype=np.float64)
    queries = np.asarray(queries, dtype=np.float64).reshape(-1, points.shape[1])
    k = min(int(k), len(points))
    if k < 1:
        raise ValueError("IDW needs at least one sample")
    dist, idx = cKDTree(points).query(queries, k=k)
    dist = dist.reshape(len(queries), k)
    idx = idx.reshape(len(queries), k)
    out = np.empty(len(queries))
    hit = dist[:, 0] == 0.0
    out[hit] = samples[idx[hit, 0]]
    d, i = dist[~hit], idx[~hit]
    w = d ** (-float(power))
    out[~hit] = (w * samples[i]).sum(axis=1) / w.sum(axis=1)
    return out


def idw_interp(radiomap, mask=None, power: float = 2.0, k_neighbors: int = 32) -> np.ndarray:
    values, obs = as_arrays(radiomap, mask)
    out = values.copy()
    miss = ~obs
    if miss.any():
        out[miss] = idw_predict(_cells(obs), values[obs], _cells(miss), power, k_neighbors)
    return out


def _kernel(r: np.ndarray, kind: str, scale: float) -> np.ndarray:
    if kind == "gaussian":
        return np.exp(-(r / scale) ** 2)
    if kind == "thin_plate":
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(r > 0, r * r * np.log(r), 0.0)
    raise ValueError(f"unknown RBF kernel {kind!r}")


def _dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    d2 = (a * a).sum(1)[:, None] + (b * b).sum(1)[None, :] - 2.0 * a @ b.T
    return np.sqrt(np.maximum(d2, 0.0))


class RbfModel:
    """Radial basis expansion plus a linear polynomial tail."""

    def __init__(self, centers, samples, kind: str = "thin_plate", scale: float = 8.0, ridge: float = 1e-8):
        self.centers = np.asarray(centers, dtype=np.float64)
        self.kind, self.scale = kind, float(scale)
        y = np.asarray(samples, dtype=np.float64)
        m = len(self.centers)
        # shift and scale coordinates for the polynomial block only
        self._mu = self.centers.mean(axis=0)
        self._sd = max(float(np.abs(self.centers - self._mu).max()), 1.0)
        A = _kernel(_dist(self.centers, self.centers), kind, self.scale) + ridge * np.eye(m)
        P = self._poly(self.centers)
        q = P.shape[1]
        lhs = np.block([[A, P], [P.T, np.zeros((q, q))]])
        rhs = np.concatenate([y, np.zeros(q)])
        try:
            sol = np.linalg.solve(lhs, rhs)
        except np.linalg.LinAlgError as e:
            raise RbfFitError(f"RBF system is singular ({m} centers): {e}") from e
        if not np.isfinite(sol).all() or np.linalg.norm(lhs @ sol - rhs) > 1e-6 * (1 + np.linalg.norm(rhs)):
            raise RbfFitError(f"RBF system is too ill-conditioned to solve ({m} centers)")
        self.weights, self.poly = sol[:m], sol[m:]

    def _poly(self, x):
        z = (x - self._mu) / self._sd
        return np.column_stack([np.ones(len(x)), z])

    def __call__(self, x, chunk: int = 4096) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64).reshape(-1, self.centers.shape[1])
        out = np.empty(len(x))
        for s in range(0, len(x), chunk):
            xs = x[s:s + chunk]
            out[s:s + chunk] = (_kernel(_dist(xs, self.centers), self.kind, self.scale) @ self.weights
                                + self._poly(xs) @ self.poly)
        return out


def rbf_interp(radiomap, mask=None, kernel: str = "thin_plate", centers_cap: int = 2000,
               ridge: float = 1e-8, scale: float = 8.0, seed: int = 0) -> np.ndarray:
    """RBF fit on at most ``centers_cap`` observed cells (seeded subsample).

    ``scale`` is the Gaussian width in cells; thin-plate ignores it.
    """
    values, obs = as_arrays(radiomap, mask)
    pts = _cells(obs)
    y = values[obs]
    if len(pts) > centers_cap:
        pick = np.sort(make_rng(seed, stream=3).choice(len(pts), size=centers_cap, replace=False))
        pts, y = pts[pick], y[pick]
    model = RbfModel(pts, y, kernel, scale, ridge)
    out = values.copy()
    miss = ~obs
    if miss.any():
        out[miss] = model(_cells(miss))
    return out


def mean_fill(radiomap, mask=None) -> np.ndarray:
    values, obs = as_arrays(radiomap, mask)
    out = values.copy()
    out[~obs] = values[obs].mean()
    return out
