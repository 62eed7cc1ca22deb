"""Deterministic synthetic radiomaps with buildings, path loss and shadowing.

Received power from each transmitter follows a log-distance law with a
per-meter penalty for the part of the straight path inside buildings; the
transmitters add up in linear power.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from scipy.ndimage import gaussian_filter

from .core import RegionMask, Scene, ScalarGrid, Transmitter
from .propagation import blocked_length_map


def make_rng(seed: int, stream: int = 0) -> np.random.Generator:
    """Counter-based generator so output is independent of evaluation order."""
    return np.random.Generator(np.random.Philox(key=[int(seed), int(stream)]))


@dataclass(frozen=True)
class TxSpec:
    position: tuple[float, float]
    power_dbm: float = 46.0
    gamma: float = 2.5


@dataclass(frozen=True)
class ShadowSpec:
    enabled: bool = True
    correlation_m: float = 20.0
    sigma_db: float = 3.0


@dataclass(frozen=True)
class ScenarioSpec:
    rows: int
    cols: int
    cell_size_m: float = 4.0
    buildings: tuple = ()  # (row, col, height, width) rectangles in cells
    transmitters: tuple = ()
    wall_attenuation_db_per_m: float = 0.8
    shadowing: ShadowSpec = field(default_factory=ShadowSpec)
    seed: int = 0

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("scenario dimensions must be positive")
        if not self.cell_size_m > 0:
            raise ValueError("cell_size_m must be positive")
        if self.wall_attenuation_db_per_m < 0:
            raise ValueError("wall attenuation must be non-negative")
        if self.shadowing.sigma_db < 0 or self.shadowing.correlation_m < 0:
            raise ValueError("shadowing parameters must be non-negative")
        blds = []
        for b in self.buildings:
            r, c, h, w = (int(x) for x in b)
            if h < 1 or w < 1 or r < 0 or c < 0 or r + h > self.rows or c + w > self.cols:
                raise ValueError(f"building {b} is outside the {self.rows}x{self.cols} grid")
            blds.append((r, c, h, w))
        txs = []
        for t in self.transmitters:
            t = t if isinstance(t, TxSpec) else TxSpec(**t)
            r, c = t.position
            if not (-0.5 <= r <= self.rows - 0.5 and -0.5 <= c <= self.cols - 0.5):
                raise ValueError(f"transmitter at {t.position} is outside the grid")
            txs.append(TxSpec((float(r), float(c)), float(t.power_dbm), float(t.gamma)))
        shadow = self.shadowing if isinstance(self.shadowing, ShadowSpec) else ShadowSpec(**self.shadowing)
        object.__setattr__(self, "buildings", tuple(blds))
        object.__setattr__(self, "transmitters", tuple(txs))
        object.__setattr__(self, "shadowing", shadow)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["buildings"] = [list(b) for b in self.buildings]
        d["transmitters"] = [dict(asdict(t), position=list(t.position)) for t in self.transmitters]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioSpec":
        known = {"rows", "cols", "cell_size_m", "buildings", "transmitters",
                 "wall_attenuation_db_per_m", "shadowing", "seed"}
        extra = set(d) - known
        if extra:
            raise ValueError(f"unknown scenario fields: {sorted(extra)}")
        d = dict(d)
        d["buildings"] = tuple(tuple(b) for b in d.get("buildings", ()))
        d["transmitters"] = tuple(TxSpec(position=tuple(t["position"]),
                                         **{k: v for k, v in t.items() if k != "position"})
                                  for t in d.get("transmitters", ()))
        if "shadowing" in d:
            d["shadowing"] = ShadowSpec(**d["shadowing"])
        return cls(**d)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)

    @classmethod
    def from_json(cls, text: str) -> "ScenarioSpec":
        return cls.from_dict(json.loads(text))

    @classmethod
    def load(cls, path) -> "ScenarioSpec":
        return cls.from_json(Path(path).read_text())


def building_grid(spec: ScenarioSpec) -> np.ndarray:
    b = np.zeros((spec.rows, spec.cols), dtype=bool)
    for r, c, h, w in spec.buildings:
        b[r:r + h, c:c + w] = True
    return b


def shadow_field(spec: ScenarioSpec) -> np.ndarray:
    sh = spec.shadowing
    if not sh.enabled or sh.sigma_db == 0:
        return np.zeros((spec.rows, spec.cols))
    noise = make_rng(spec.seed, stream=1).standard_normal((spec.rows, spec.cols))
    field_ = gaussian_filter(noise, sigma=sh.correlation_m / spec.cell_size_m, mode="wrap")
    std = field_.std()
    if std == 0:
        return np.zeros_like(field_)
    return (field_ - field_.mean()) / std * sh.sigma_db


def tx_power_map(spec: ScenarioSpec, k: int, buildings: Optional[np.ndarray] = None) -> np.ndarray:
    """Received power (dBm) from transmitter ``k`` without shadowing."""
    tx = spec.transmitters[k]
    if buildings is None:
        buildings = building_grid(spec)
    ii, jj = np.meshgrid(np.arange(spec.rows), np.arange(spec.cols), indexing="ij")
    d = np.hypot(ii - tx.position[0], jj - tx.position[1]) * spec.cell_size_m
    d = np.maximum(d, 0.5 * spec.cell_size_m)
    blocked, _ = blocked_length_map(buildings, tx.position)
    return (tx.power_dbm - 10.0 * tx.gamma * np.log10(d)
            - spec.wall_attenuation_db_per_m * blocked * spec.cell_size_m)


def generate(spec: ScenarioSpec) -> tuple[ScalarGrid, Scene]:
    """Ground-truth radiomap (dBm) and the matching scene."""
    if not spec.transmitters:
        raise ValueError("scenario needs at least one transmitter")
    buildings = building_grid(spec)
    shadow = shadow_field(spec)
    linear = np.zeros((spec.rows, spec.cols))
    for k in range(len(spec.transmitters)):
        linear += 10.0 ** ((tx_power_map(spec, k, buildings) + shadow) / 10.0)
    truth = 10.0 * np.log10(linear)
    scene = Scene(buildings, spec.cell_size_m,
                  tuple(Transmitter(t.position, t.power_dbm) for t in spec.transmitters))
    return ScalarGrid(truth, units="dBm"), scene


def random_scenario(seed: int, rows: int = 128, cols: int = 128, n_tx: int = 3,
                    n_buildings: Optional[int] = None, building_size: tuple[int, int] = (3, 10),
                    cell_size_m: float = 4.0, wall_attenuation_db_per_m: float = 0.8,
                    shadowing: ShadowSpec = ShadowSpec(), power_dbm: float = 46.0,
                    gamma_range: tuple[float, float] = (2.0, 3.0)) -> ScenarioSpec:
    """Urban-like scenario: random non-overlapping buildings and transmitters in the open."""
    rng = make_rng(seed, stream=0)
    if n_buildings is None:
        n_buildings = max(1, rows * cols // 400)
    occupied = np.zeros((rows, cols), dtype=bool)
    buildings = []
    lo, hi = building_size
    tries = 0
    while len(buildings) < n_buildings and tries < 50 * n_buildings:
        tries += 1
        h, w = (int(x) for x in rng.integers(lo, hi + 1, size=2))
        if h >= rows or w >= cols:
            continue
        r = int(rng.integers(0, rows - h + 1))
        c = int(rng.integers(0, cols - w + 1))
        # keep a one-cell street between buildings
        if occupied[max(r - 1, 0):r + h + 1, max(c - 1, 0):c + w + 1].any():
            continue
        occupied[r:r + h, c:c + w] = True
        buildings.append((r, c, h, w))
    txs = []
    margin = max(1, min(rows, cols) // 16)
    while len(txs) < n_tx:
        r = float(rng.integers(margin, rows - margin))
        c = float(rng.integers(margin, cols - margin))
        if occupied[int(r), int(c)]:
            continue
        gamma = float(rng.uniform(*gamma_range))
        txs.append(TxSpec((r, c), power_dbm, round(gamma, 6)))
    return ScenarioSpec(rows, cols, cell_size_m, tuple(buildings), tuple(txs),
                        wall_attenuation_db_per_m, shadowing, seed)


def make_mask(shape, rect: Optional[Sequence[int]] = None, n_regions: int = 0, size: int = 0,
              seed: int = 0) -> RegionMask:
    """Observed-region mask with rectangular holes.

    ``rect = (row, col, M, N)`` cuts one M x N hole; otherwise ``n_regions``
    non-overlapping ``size x size`` holes are placed at seeded random spots.
    """
    rows, cols = shape
    observed = np.ones((rows, cols), dtype=bool)
    if rect is not None:
        r, c, m, n = (int(x) for x in rect)
        if m < 1 or n < 1 or r < 0 or c < 0 or r + m > rows or c + n > cols:
            raise ValueError(f"hole {tuple(rect)} does not fit in a {rows}x{cols} grid")
        observed[r:r + m, c:c + n] = False
    else:
        if size < 1 or size > rows or size > cols:
            raise ValueError(f"hole size {size} does not fit in a {rows}x{cols} grid")
        rng = make_rng(seed, stream=2)
        placed = 0
        tries = 0
        while placed < n_regions:
            tries += 1
            if tries > 1000 * max(n_regions, 1):
                raise ValueError(f"could not place {n_regions} non-overlapping {size}x{size} holes")
            r = int(rng.integers(0, rows - size + 1))
            c = int(rng.integers(0, cols - size + 1))
            if not observed[r:r + size, c:c + size].all():
                continue
            observed[r:r + size, c:c + size] = False
            placed += 1
    if not observed.any():
        raise ValueError("hole covers the whole grid; nothing observed")
    return RegionMask(observed)
