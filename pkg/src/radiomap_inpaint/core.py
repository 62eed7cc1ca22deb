"""Grid data model, masks, scenes and patch windowing.

Coordinates are ``(row, col)``. Cell ``(i, j)`` has its center at the
continuous point ``(i, j)`` and spans ``[i - 0.5, i + 0.5) x [j - 0.5, j + 0.5)``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

UNITS = ("dBm", "normalized", "unitless")

# Value stored in unobserved cells; never read through the public accessors.
SENTINEL = 0.0


class MissingValueError(LookupError):
    """Raised when a cell of the missing region is read before reconstruction."""


class DegenerateScaleError(ValueError):
    """Raised when a min-max normalization has zero span."""


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class RegionMask:
    """Boolean grid, ``True`` for observed cells and ``False`` for missing ones."""

    observed: np.ndarray

    def __post_init__(self):
        obs = np.asarray(self.observed, dtype=bool)
        if obs.ndim != 2 or obs.shape[0] < 1 or obs.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2-D grid, got shape {obs.shape}")
        if not obs.any():
            raise ValueError("mask has no observed cells")
        object.__setattr__(self, "observed", _readonly(obs))

    @property
    def shape(self) -> tuple[int, int]:
        return self.observed.shape

    @property
    def rows(self) -> int:
        return self.observed.shape[0]

    @property
    def cols(self) -> int:
        return self.observed.shape[1]

    @property
    def missing(self) -> np.ndarray:
        return ~self.observed

    def missing_count(self) -> int:
        return int((~self.observed).sum())

    @classmethod
    def full(cls, rows: int, cols: int) -> "RegionMask":
        return cls(np.ones((rows, cols), dtype=bool))


@dataclass(frozen=True)
class ScalarGrid:
    """A rows x cols grid of reals with an optional observed-cell mask.

    Cells outside ``observed`` hold :data:`SENTINEL`; indexing them raises
    :class:`MissingValueError`.
    """

    data: np.ndarray
    units: str = "dBm"
    observed: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.units not in UNITS:
            raise ValueError(f"unknown units {self.units!r}; expected one of {UNITS}")
        data = np.array(self.data, dtype=np.float64)
        if data.ndim != 2 or data.shape[0] < 1 or data.shape[1] < 1:
            raise ValueError(f"grid must be a non-empty 2-D array, got shape {data.shape}")
        obs = None
        if self.observed is not None:
            obs = np.asarray(self.observed, dtype=bool)
            if obs.shape != data.shape:
                raise ValueError(f"mask shape {obs.shape} != grid shape {data.shape}")
            data = np.where(obs, data, SENTINEL)
            if obs.all():
                obs = None
        check = data if obs is None else data[obs]
        if not np.all(np.isfinite(check)):
            raise ValueError("grid contains non-finite values")
        object.__setattr__(self, "data", _readonly(data))
        object.__setattr__(self, "observed", None if obs is None else _readonly(obs))

    @property
    def rows(self) -> int:
        return self.data.shape[0]

    @property
    def cols(self) -> int:
        return self.data.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape

    @property
    def complete(self) -> bool:
        return self.observed is None

    def mask(self) -> RegionMask:
        if self.observed is None:
            return RegionMask.full(self.rows, self.cols)
        return RegionMask(self.observed)

    def __getitem__(self, cell: tuple[int, int]) -> float:
        i, j = cell
        if self.observed is not None and not self.observed[i, j]:
            raise MissingValueError(f"cell {(i, j)} is in the missing region")
        return float(self.data[i, j])

    def values(self) -> np.ndarray:
        """Writable copy of the full value array; raises if any cell is missing."""
        if self.observed is not None:
            raise MissingValueError(
                f"{int((~self.observed).sum())} cells are still missing; use raw() explicitly"
            )
        return np.array(self.data)

    def raw(self) -> np.ndarray:
        """Writable copy including sentinel values in missing cells."""
        return np.array(self.data)


@dataclass(frozen=True)
class Transmitter:
    position: tuple[float, float]
    power_dbm: float = 46.0
    # optional fitted log-distance parameters (theta, epsilon)
    params: Optional[tuple[float, float]] = None

    @property
    def row(self) -> float:
        return float(self.position[0])

    @property
    def col(self) -> float:
        return float(self.position[1])


@dataclass(frozen=True)
class Scene:
    buildings: np.ndarray
    cell_size_m: float = 1.0
    transmitters: Sequence[Transmitter] = field(default_factory=tuple)

    def __post_init__(self):
        b = np.asarray(self.buildings, dtype=bool)
        if b.ndim != 2:
            raise ValueError("buildings must be a 2-D grid")
        if not self.cell_size_m > 0:
            raise ValueError("cell_size_m must be positive")
        rows, cols = b.shape
        for tx in self.transmitters:
            if not (-0.5 <= tx.row <= rows - 0.5 and -0.5 <= tx.col <= cols - 0.5):
                raise ValueError(f"transmitter at {tx.position} lies outside the {rows}x{cols} grid")
        object.__setattr__(self, "buildings", _readonly(b))
        object.__setattr__(self, "transmitters", tuple(self.transmitters))

    @property
    def shape(self) -> tuple[int, int]:
        return self.buildings.shape

    def require_transmitters(self):
        if not self.transmitters:
            raise ValueError("scene has no transmitters; propagation-aware methods need at least one")


@dataclass(frozen=True)
class Patch:
    """An n x n window centered at ``center``, clipped to the grid.

    ``valid`` marks in-bounds offsets, ``observed`` marks in-bounds observed
    cells. ``values`` holds grid values at valid offsets (sentinel elsewhere).
    """

    center: tuple[int, int]
    size: int
    values: np.ndarray
    valid: np.ndarray
    observed: np.ndarray

    @property
    def half(self) -> int:
        return self.size // 2

    def observed_count(self) -> int:
        return int(self.observed.sum())


def _check_odd(n: int):
    if n < 3 or n % 2 == 0:
        raise ValueError(f"patch size must be odd and >= 3, got {n}")


def window_bounds(center, n: int, shape) -> tuple[int, int, int, int]:
    """Clipped grid bounds ``(r0, r1, c0, c1)`` (half-open) of an n x n window."""
    h = n // 2
    i, j = center
    return max(i - h, 0), min(i + h + 1, shape[0]), max(j - h, 0), min(j + h + 1, shape[1])


def window_offsets(center, n: int, shape) -> tuple[slice, slice, slice, slice]:
    """Grid slices and matching slices into the n x n patch frame."""
    h = n // 2
    i, j = center
    r0, r1, c0, c1 = window_bounds(center, n, shape)
    gr, gc = slice(r0, r1), slice(c0, c1)
    pr = slice(r0 - (i - h), r1 - (i - h))
    pc = slice(c0 - (j - h), c1 - (j - h))
    return gr, gc, pr, pc


def window_slices(center, n, shape):
    gr, gc, _, _ = window_offsets(center, n, shape)
    return gr, gc


def extract_patch(values: np.ndarray, observed: np.ndarray, center, n: int) -> Patch:
    """Cut the n x n window around ``center`` out of a grid."""
    _check_odd(n)
    values = np.asarray(values, dtype=np.float64)
    observed = np.asarray(observed, dtype=bool)
    i, j = center
    if not (0 <= i < values.shape[0] and 0 <= j < values.shape[1]):
        raise IndexError(f"center {center} outside grid {values.shape}")
    gr, gc, pr, pc = window_offsets(center, n, values.shape)
    vals = np.full((n, n), SENTINEL)
    valid = np.zeros((n, n), dtype=bool)
    obs = np.zeros((n, n), dtype=bool)
    valid[pr, pc] = True
    obs[pr, pc] = observed[gr, gc]
    vals[pr, pc] = np.where(observed[gr, gc], values[gr, gc], SENTINEL)
    return Patch(center=(int(i), int(j)), size=n, values=vals, valid=valid, observed=obs)


_NEIGHBORS_8 = [(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)]


def front_mask(observed: np.ndarray) -> np.ndarray:
    """Boolean grid of missing cells with at least one 8-neighbor observed."""
    observed = np.asarray(observed, dtype=bool)
    padded = np.pad(observed, 1, constant_values=False)
    near = np.zeros_like(observed)
    rows, cols = observed.shape
    for di, dj in _NEIGHBORS_8:
        near |= padded[1 + di:1 + di + rows, 1 + dj:1 + dj + cols]
    return near & ~observed


def boundary(mask) -> list[tuple[int, int]]:
    """Fill-front cells in row-major order."""
    observed = mask.observed if isinstance(mask, RegionMask) else np.asarray(mask, dtype=bool)
    ii, jj = np.nonzero(front_mask(observed))
    return list(zip(ii.tolist(), jj.tolist()))


@dataclass(frozen=True)
class AffineParams:
    """``normalized = (value - offset) / span``."""

    offset: float
    span: float

    def apply(self, x):
        return (np.asarray(x, dtype=np.float64) - self.offset) / self.span

    def invert(self, y):
        return np.asarray(y, dtype=np.float64) * self.span + self.offset


def normalize(grid: ScalarGrid) -> tuple[ScalarGrid, AffineParams]:
    """Min-max scale a grid to [0, 1] using observed cells only."""
    obs = grid.mask().observed
    vals = grid.data[obs]
    lo, hi = float(vals.min()), float(vals.max())
    if not hi > lo:
        raise DegenerateScaleError(f"observed values are constant ({lo}); cannot normalize")
    params = AffineParams(lo, hi - lo)
    out = ScalarGrid(params.apply(grid.data), units="normalized", observed=grid.observed)
    return out, params


def denormalize(grid: ScalarGrid, params: AffineParams, units: str = "dBm") -> ScalarGrid:
    return ScalarGrid(params.invert(grid.data), units=units, observed=grid.observed)


def as_arrays(radiomap, mask=None) -> tuple[np.ndarray, np.ndarray]:
    """``(values, observed)`` copies from a ScalarGrid or an array plus mask."""
    if isinstance(radiomap, ScalarGrid):
        values = np.array(radiomap.raw(), dtype=np.float64)
        obs = radiomap.mask().observed if mask is None else None
    else:
        values = np.array(radiomap, dtype=np.float64)
        obs = None
    if mask is not None:
        obs = mask.observed if isinstance(mask, RegionMask) else np.asarray(mask, dtype=bool)
    if obs is None:
        raise ValueError("a mask is required for plain-array input")
    obs = np.array(obs, dtype=bool)
    if obs.shape != values.shape:
        raise ValueError(f"mask shape {obs.shape} != map shape {values.shape}")
    if not obs.any():
        raise ValueError("nothing observed")
    if not np.isfinite(values[obs]).all():
        raise ValueError("observed values must be finite")
    return values, obs
