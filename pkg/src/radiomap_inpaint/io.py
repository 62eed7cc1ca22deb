"""Text grids, masks, PGM rendering and error metrics.

Grid files ("RMG1") are plain text: a header line ``RMG1 <rows> <cols> <units>``
followed by one line per row of space-separated values printed with 17
significant digits (bit-stable round trip). Missing cells are written ``NA``.
Masks use the same framing with 1 for observed and 0 for missing cells.
"""
from __future__ import annotations

from pathlib import Path

import numpy as np

from .core import UNITS, RegionMask, ScalarGrid

MAGIC = "RMG1"
MASK_UNITS = "mask"


class FormatError(ValueError):
    pass


def _fmt(v: float) -> str:
    return format(float(v), ".17g")


def _write(path, rows: int, cols: int, units: str, lines) -> None:
    with open(path, "w", encoding="ascii", newline="\n") as f:
        f.write(f"{MAGIC} {rows} {cols} {units}\n")
        for line in lines:
            f.write(line + "\n")


def write_grid(path, grid, observed=None, units: str = None) -> None:
    """Write a ScalarGrid (or an array with optional observed mask)."""
    if isinstance(grid, ScalarGrid):
        data = grid.data
        obs = grid.mask().observed if observed is None else np.asarray(observed, dtype=bool)
        units = units or grid.units
    else:
        data = np.asarray(grid, dtype=np.float64)
        obs = np.ones(data.shape, dtype=bool) if observed is None else np.asarray(observed, dtype=bool)
        units = units or "dBm"
    if data.ndim != 2:
        raise FormatError("grids must be 2-D")
    if units not in UNITS:
        raise FormatError(f"unknown units {units!r}; expected one of {UNITS}")
    if not np.isfinite(data[obs]).all():
        raise FormatError("cannot write non-finite values")
    rows, cols = data.shape
    _write(path, rows, cols, units,
           (" ".join(_fmt(v) if o else "NA" for v, o in zip(data[i], obs[i])) for i in range(rows)))


def _read(path):
    text = Path(path).read_text(encoding="ascii")
    lines = text.splitlines()
    if not lines:
        raise FormatError(f"{path}: empty file")
    head = lines[0].split()
    if len(head) != 4 or head[0] != MAGIC:
        raise FormatError(f"{path}: bad header {lines[0]!r}")
    try:
        rows, cols = int(head[1]), int(head[2])
    except ValueError:
        raise FormatError(f"{path}: bad dimensions in header {lines[0]!r}") from None
    if rows < 1 or cols < 1:
        raise FormatError(f"{path}: non-positive dimensions {rows}x{cols}")
    body = [ln for ln in lines[1:] if ln.strip()]
    if len(body) != rows:
        raise FormatError(f"{path}: expected {rows} rows, found {len(body)}")
    tokens = []
    for i, ln in enumerate(body):
        tok = ln.split()
        if len(tok) != cols:
            raise FormatError(f"{path}: row {i} has {len(tok)} values, expected {cols}")
        tokens.append(tok)
    return head[3], tokens


def _parse(tok: str, path, i, j) -> float:
    try:
        v = float(tok)
    except ValueError:
        raise FormatError(f"{path}: malformed token {tok!r} at ({i}, {j})") from None
    if not np.isfinite(v):
        raise FormatError(f"{path}: non-finite value {tok!r} at ({i}, {j})")
    return v


def read_grid(path) -> ScalarGrid:
    units, tokens = _read(path)
    if units not in UNITS:
        raise FormatError(f"{path}: unknown units {units!r}")
    rows, cols = len(tokens), len(tokens[0])
    data = np.zeros((rows, cols))
    obs = np.ones((rows, cols), dtype=bool)
    for i, row in enumerate(tokens):
        for j, tok in enumerate(row):
            if tok == "NA":
                obs[i, j] = False
            else:
                data[i, j] = _parse(tok, path, i, j)
    return ScalarGrid(data, units=units, observed=None if obs.all() else obs)


def write_mask(path, mask) -> None:
    obs = mask.observed if isinstance(mask, RegionMask) else np.asarray(mask, dtype=bool)
    rows, cols = obs.shape
    _write(path, rows, cols, MASK_UNITS, (" ".join("1" if o else "0" for o in obs[i]) for i in range(rows)))


def read_mask(path) -> RegionMask:
    units, tokens = _read(path)
    if units != MASK_UNITS:
        raise FormatError(f"{path}: not a mask file (units {units!r})")
    arr = np.array(tokens)
    bad = ~np.isin(arr, ("0", "1"))
    if bad.any():
        i, j = np.argwhere(bad)[0]
        raise FormatError(f"{path}: mask token {arr[i, j]!r} at ({i}, {j}) is not 0 or 1")
    return RegionMask(arr == "1")


def write_labels(path, labels) -> None:
    write_grid(path, np.asarray(labels, dtype=np.float64), units="unitless")


def render_pgm(grid, path, range_=None, observed=None) -> bytes:
    """Write a binary greyscale PGM; returns the bytes written.

    ``range_`` is ``None`` (auto: min/max of the observed cells) or ``(lo, hi)``.
    Values map linearly to 0..255 and are clamped; missing cells render black.
    """
    if isinstance(grid, ScalarGrid):
        data = grid.data
        obs = grid.mask().observed if observed is None else np.asarray(observed, dtype=bool)
    else:
        data = np.asarray(grid, dtype=np.float64)
        obs = np.ones(data.shape, dtype=bool) if observed is None else np.asarray(observed, dtype=bool)
    if range_ is None:
        lo, hi = float(data[obs].min()), float(data[obs].max())
    else:
        lo, hi = (float(v) for v in range_)
    if not hi > lo:
        raise ValueError(f"degenerate render range [{lo}, {hi}]")
    scaled = np.clip(np.rint((data - lo) / (hi - lo) * 255.0), 0, 255).astype(np.uint8)
    scaled[~obs] = 0
    rows, cols = data.shape
    blob = f"P5\n{cols} {rows}\n255\n".encode("ascii") + scaled.tobytes()
    Path(path).write_bytes(blob)
    return blob


def _region(region, shape):
    if region is None:
        return np.ones(shape, dtype=bool)
    if isinstance(region, RegionMask):
        return region.missing
    return np.asarray(region, dtype=bool)


def _vals(x):
    return x.raw() if isinstance(x, ScalarGrid) else np.asarray(x, dtype=np.float64)


def mse(truth, estimate, region=None) -> float:
    """Mean squared error over ``region`` (a bool grid, or the missing cells of a RegionMask)."""
    t, e = _vals(truth), _vals(estimate)
    sel = _region(region, t.shape)
    if not sel.any():
        raise ValueError("empty evaluation region")
    d = t[sel] - e[sel]
    return float(np.mean(d * d))


def ne(truth, estimate, region=None) -> float:
    """Squared error normalized by the truth's energy over ``region``."""
    t, e = _vals(truth), _vals(estimate)
    sel = _region(region, t.shape)
    energy = float(np.sum(t[sel] ** 2))
    if not energy > 0:
        raise ValueError("truth has zero energy over the region")
    d = t[sel] - e[sel]
    return float(np.sum(d * d)) / energy
