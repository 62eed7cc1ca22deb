"""Entropy-rate superpixels and the template / perturbation split.

The segmentation graph is the 4-connected cell lattice with Gaussian edge
similarities. Edges are added greedily by the gain of entropy rate plus a
weighted balancing term until ``K`` components remain.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy.ndimage import distance_transform_edt

from .core import SENTINEL


@dataclass
class SuperpixelLabeling:
    labels: np.ndarray
    K: int
    alpha: float = 0.0
    bandwidth: float = 1.0
    # (edge index, gain) in acceptance order; filled when ``record=True``
    accepted: list = field(default_factory=list)

    def sizes(self) -> np.ndarray:
        return np.bincount(self.labels.ravel(), minlength=self.K)


def lattice_edges(shape) -> tuple[np.ndarray, np.ndarray]:
    """Endpoints (flat indices) of the 4-connected lattice: horizontal then vertical."""
    rows, cols = shape
    idx = np.arange(rows * cols).reshape(rows, cols)
    u = np.concatenate([idx[:, :-1].ravel(), idx[:-1, :].ravel()])
    v = np.concatenate([idx[:, 1:].ravel(), idx[1:, :].ravel()])
    return u, v


def edge_weights(signal: np.ndarray, u, v, bandwidth: Optional[float] = None):
    """Gaussian similarities ``exp(-diff^2 / h^2)`` and the bandwidth used.

    ``signal`` may carry channels in a trailing axis. The default bandwidth is
    the standard deviation of the edge differences (1 when that is zero).
    """
    sig = np.asarray(signal, dtype=np.float64)
    flat = sig.reshape(sig.shape[0] * sig.shape[1], -1)
    diff = flat[u] - flat[v]
    if bandwidth is None:
        bandwidth = float(np.std(diff)) if diff.size else 0.0
        if not bandwidth > 0:
            bandwidth = 1.0
    d2 = (diff * diff).sum(axis=1)
    return np.exp(-d2 / bandwidth ** 2), bandwidth


def _xlogx(x: float) -> float:
    return x * math.log(x) if x > 0 else 0.0


def entropy_gain(w: float, loop_u: float, loop_v: float) -> float:
    """Entropy-rate gain of moving weight ``w`` from both self-loops onto an edge.

    Weights are normalized by the total graph weight; ``loop_*`` are the
    current self-loop weights of the endpoints.
    """
    if w <= 0:
        return 0.0
    a, b = loop_u - w, loop_v - w
    return (_xlogx(a + w) - _xlogx(a) - _xlogx(w)) + (_xlogx(b + w) - _xlogx(b) - _xlogx(w))


def balance_gain(size_a: int, size_b: int, n: int) -> float:
    """Gain of the balancing term (cluster-size entropy minus cluster count) for one merge."""
    pa, pb = size_a / n, size_b / n
    return _xlogx(pa) + _xlogx(pb) - _xlogx(pa + pb) + 1.0


class _UnionFind:
    def __init__(self, n):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x):
        p = self.parent
        while p[x] != x:
            p[x] = p[p[x]]
            x = p[x]
        return x

    def union(self, a, b):
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        return a


def relabel_first_touch(labels: np.ndarray) -> np.ndarray:
    flat = labels.ravel()
    _, first, inverse = np.unique(flat, return_index=True, return_inverse=True)
    order = np.argsort(np.argsort(first))
    return order[inverse].reshape(labels.shape)


def auto_alpha(K: int, max_h_gain: float, max_t_gain: float, balance: float = 0.5) -> float:
    """Balancing weight scaled so both terms are comparable for a K-way partition."""
    if max_t_gain <= 0:
        return 0.0
    return balance * K * max_h_gain / max_t_gain


def default_superpixel_count(shape) -> int:
    return max(1, (shape[0] * shape[1]) // 256)


def segmentation_signal(landscape, values=None, observed=None) -> np.ndarray:
    """Landscape grid, optionally with the observed map as a second channel.

    Missing cells of the map channel copy the nearest observed cell, so the
    hole outline itself does not become a segment boundary.
    """
    land = np.asarray(landscape, dtype=np.float64)
    if values is None:
        return land
    values = np.asarray(values, dtype=np.float64)
    observed = np.asarray(observed, dtype=bool)
    _, (ii, jj) = distance_transform_edt(~observed, return_indices=True)
    return np.stack([land, values[ii, jj]], axis=-1)


def ers_segment(signal, K: Optional[int] = None, alpha: Optional[float] = None,
                bandwidth: Optional[float] = None, balance: float = 0.5,
                record: bool = False) -> SuperpixelLabeling:
    """Segment a grid into ``K`` 4-connected superpixels.

    ``signal`` is the landscape grid (optionally with extra channels in a
    trailing axis). Lazy greedy: heap entries carry possibly stale gains,
    which only shrink as the partition grows, so a popped edge whose fresh
    gain still beats the next stored gain is the true maximum.
    """
    signal = np.asarray(signal, dtype=np.float64)
    shape = signal.shape[:2]
    n = shape[0] * shape[1]
    if K is None:
        K = default_superpixel_count(shape)
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, {n}], got {K}")
    u, v = lattice_edges(shape)
    w, h = edge_weights(signal, u, v, bandwidth)
    loops = np.zeros(n)
    np.add.at(loops, u, w)
    np.add.at(loops, v, w)
    total = loops.sum()
    if total > 0:
        w = w / total
        loops = loops / total

    h_gain0 = np.array([entropy_gain(we, loops[a], loops[b]) for we, a, b in zip(w, u, v)])
    t_gain0 = balance_gain(1, 1, n)
    if alpha is None:
        alpha = auto_alpha(K, float(h_gain0.max()) if len(w) else 0.0, t_gain0, balance)

    loops_l = loops.tolist()
    w_l, u_l, v_l = w.tolist(), u.tolist(), v.tolist()
    heap = [(-(g + alpha * t_gain0), e) for e, g in enumerate(h_gain0.tolist())]
    heapq.heapify(heap)
    uf = _UnionFind(n)
    components = n
    accepted = []
    while components > K and heap:
        _, e = heapq.heappop(heap)
        a, b = u_l[e], v_l[e]
        ra, rb = uf.find(a), uf.find(b)
        if ra == rb:
            continue
        we = w_l[e]
        gain = (entropy_gain(we, loops_l[a], loops_l[b])
                + alpha * balance_gain(uf.size[ra], uf.size[rb], n))
        if heap and gain < -heap[0][0]:
            heapq.heappush(heap, (-gain, e))
            continue
        uf.union(ra, rb)
        loops_l[a] -= we
        loops_l[b] -= we
        components -= 1
        if record:
            accepted.append((e, gain))

    roots = np.array([uf.find(i) for i in range(n)]).reshape(shape)
    labels = relabel_first_touch(roots)
    return SuperpixelLabeling(labels, int(labels.max()) + 1, float(alpha), float(h), accepted)


def build_template(values, observed, labels) -> tuple[np.ndarray, np.ndarray]:
    """Per-superpixel mean of the observed values, spread over the superpixel.

    Returns ``(template, defined)``; superpixels without any observed cell are
    left undefined (sentinel) and must be inpainted.
    """
    values = np.asarray(values, dtype=np.float64)
    observed = np.asarray(observed, dtype=bool)
    lab = np.asarray(labels).ravel()
    K = int(lab.max()) + 1
    obs = observed.ravel()
    sums = np.bincount(lab[obs], weights=values.ravel()[obs], minlength=K)
    counts = np.bincount(lab[obs], minlength=K)
    has = counts > 0
    means = np.where(has, sums / np.maximum(counts, 1), SENTINEL)
    template = means[lab].reshape(values.shape)
    defined = has[lab].reshape(values.shape)
    return template, defined


def build_perturbation(values, template, observed) -> np.ndarray:
    """``values - template`` on observed cells, sentinel elsewhere."""
    observed = np.asarray(observed, dtype=bool)
    return np.where(observed, np.asarray(values, dtype=np.float64) - np.asarray(template, dtype=np.float64),
                    SENTINEL)
