"""Exemplar search and fill.

Candidate source windows are fully observed n x n windows, addressed by
their top-left origin and enumerated in row-major order.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .core import Patch


class NoExemplarError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimilarityWeights:
    spectrum: float = 1.0
    depth: float = 1.0
    landscape: float = 0.25
    distance: float = 0.05


@dataclass(frozen=True)
class Match:
    origin: tuple[int, int]
    cost: float

    def center(self, n: int) -> tuple[int, int]:
        return self.origin[0] + n // 2, self.origin[1] + n // 2


def default_stride(shape) -> int:
    return 1 if shape[0] * shape[1] <= 256 * 256 else 2


def full_window_origins(observed, n: int, stride: int = 1) -> np.ndarray:
    """Row-major ``(k, 2)`` array of origins of fully observed n x n windows."""
    miss = (~np.asarray(observed, dtype=bool)).astype(np.int64)
    rows, cols = miss.shape
    if rows < n or cols < n:
        return np.zeros((0, 2), dtype=np.int64)
    ii = np.pad(miss.cumsum(0).cumsum(1), ((1, 0), (1, 0)))
    counts = ii[n:, n:] - ii[:-n, n:] - ii[n:, :-n] + ii[:-n, :-n]
    ok = counts[::stride, ::stride] == 0
    r, c = np.nonzero(ok)
    return np.column_stack([r * stride, c * stride]).astype(np.int64)


def _gather(grid: np.ndarray, origins: np.ndarray, offsets: tuple[np.ndarray, np.ndarray], n: int):
    view = sliding_window_view(grid, (n, n))
    return view[origins[:, 0][:, None], origins[:, 1][:, None], offsets[0][None, :], offsets[1][None, :]]


def masked_ssd(values, origins: np.ndarray, target: Patch) -> np.ndarray:
    """SSD between each candidate window and the target over the target's observed cells."""
    oa, ob = np.nonzero(target.observed)
    if oa.size == 0:
        return np.zeros(len(origins))
    win = _gather(np.asarray(values, dtype=np.float64), origins, (oa, ob), target.size)
    diff = win - target.values[oa, ob][None, :]
    sq = diff * diff
    # left-to-right accumulation in row-major cell order, so the costs do not
    # depend on numpy's pairwise summation blocking
    cost = np.zeros(len(origins))
    for k in range(sq.shape[1]):
        cost += sq[:, k]
    return cost


def epc_search(values, observed, target: Patch, stride: int = 1, origins=None) -> Match:
    """Best fully observed source window for ``target`` by masked SSD.

    Ties go to the first window in row-major origin order.
    """
    n = target.size
    if origins is None:
        origins = full_window_origins(observed, n, stride)
    if len(origins) == 0:
        raise NoExemplarError(f"no fully observed {n}x{n} window; use a smaller patch size")
    cost = masked_ssd(values, origins, target)
    k = int(np.argmin(cost))
    return Match((int(origins[k, 0]), int(origins[k, 1])), float(cost[k]))


def source_window(values, origin, n: int) -> np.ndarray:
    r, c = origin
    return np.asarray(values)[r:r + n, c:c + n]


def epc_fill(target: Patch, source: np.ndarray) -> np.ndarray:
    """Copy source values into the target's missing in-bounds cells."""
    out = np.array(target.values)
    missing = target.valid & ~target.observed
    out[missing] = np.asarray(source)[missing]
    return out


def _window_of(grid, center, n):
    """n x n window of ``grid`` around ``center``; out-of-bounds padded with 0."""
    h = n // 2
    padded = np.pad(np.asarray(grid, dtype=np.float64), h)
    i, j = center
    return padded[i:i + n, j:j + n]


def template_similarity(target: Patch, origin, values, depth, landscape,
                        weights: SimilarityWeights = SimilarityWeights()) -> float:
    """Four-term dissimilarity between a candidate window and the target.

    Spectrum over the target's observed cells, depth and landscape over its
    in-bounds cells, plus center distance normalized by the map diagonal.
    """
    n = target.size
    r, c = origin
    src_v = np.asarray(values, dtype=np.float64)[r:r + n, c:c + n]
    src_w = np.asarray(depth, dtype=np.float64)[r:r + n, c:c + n]
    src_m = np.asarray(landscape, dtype=np.float64)[r:r + n, c:c + n]
    obs, valid = target.observed, target.valid
    t_w = _window_of(depth, target.center, n)
    t_m = _window_of(landscape, target.center, n)
    spec = float(((target.values[obs] - src_v[obs]) ** 2).sum())
    dep = float(((t_w[valid] - src_w[valid]) ** 2).sum())
    land = float(((t_m[valid] - src_m[valid]) ** 2).sum())
    rows, cols = np.shape(values)
    dis = float(np.hypot(target.center[0] - (r + n // 2), target.center[1] - (c + n // 2)) / np.hypot(rows, cols))
    return (weights.spectrum * spec + weights.depth * dep + weights.landscape * land
            + weights.distance * dis)


def similarity_scores(target: Patch, origins: np.ndarray, values, depth, landscape,
                      weights: SimilarityWeights = SimilarityWeights()) -> np.ndarray:
    """Vectorized :func:`template_similarity` over many candidate origins."""
    n = target.size
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    spec = masked_ssd(values, origins, target)
    va, vb = np.nonzero(target.valid)
    t_w = _window_of(depth, target.center, n)[va, vb]
    t_m = _window_of(landscape, target.center, n)[va, vb]
    w = _gather(np.asarray(depth, dtype=np.float64), origins, (va, vb), n) - t_w[None, :]
    m = _gather(np.asarray(landscape, dtype=np.float64), origins, (va, vb), n) - t_m[None, :]
    rows, cols = np.shape(values)
    dis = np.hypot(target.center[0] - (origins[:, 0] + n // 2),
                   target.center[1] - (origins[:, 1] + n // 2)) / np.hypot(rows, cols)
    return (weights.spectrum * spec + weights.depth * (w * w).sum(axis=1)
            + weights.landscape * (m * m).sum(axis=1) + weights.distance * dis)


def template_exemplar_select(origins, target: Patch, values, depth, landscape,
                             weights: SimilarityWeights = SimilarityWeights(), m_top: int = 5) -> list[Match]:
    """The ``m_top`` most similar candidates, best first.

    Ordering is by score, then row-major origin, so it does not depend on the
    order candidates are supplied in.
    """
    origins = np.asarray(origins, dtype=np.int64).reshape(-1, 2)
    if len(origins) == 0:
        raise NoExemplarError("no candidate exemplars")
    scores = similarity_scores(target, origins, values, depth, landscape, weights)
    order = np.lexsort((origins[:, 1], origins[:, 0], scores))[:m_top]
    return [Match((int(origins[k, 0]), int(origins[k, 1])), float(scores[k])) for k in order]
