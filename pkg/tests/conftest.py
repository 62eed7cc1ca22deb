import numpy as np
import pytest

from radiomap_inpaint.core import Scene, Transmitter


def supersample_cells(start, end, shape, n=100_000):
    """Per-cell path length (in cells) by midpoint sampling of the segment."""
    start, end = np.asarray(start, float), np.asarray(end, float)
    length = float(np.hypot(*(end - start)))
    t = (np.arange(n) + 0.5) / n
    pts = start[None, :] + t[:, None] * (end - start)[None, :]
    ij = np.clip(np.floor(pts + 0.5).astype(int), 0, np.array(shape) - 1)
    cells, counts = np.unique(ij, axis=0, return_counts=True)
    return {tuple(c): k * length / n for c, k in zip(cells.tolist(), counts)}, length


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def open_scene():
    def make(rows=16, cols=16, txs=((7.0, 7.0),), cell=1.0, buildings=None):
        b = np.zeros((rows, cols), bool) if buildings is None else buildings
        return Scene(b, cell, tuple(Transmitter(p) for p in txs))
    return make
