"""Seeded random test inputs shared by the norm checks and experiments."""
from __future__ import annotations

from typing import Optional

import numpy as np

from .grid import DyadicCube, DyadicGrid
from .weights import Weight

KINDS = ("indicator", "rademacher", "lognormal", "modulated", "dual")


def random_cube(grid: DyadicGrid, rng: np.random.Generator, max_level: Optional[int] = None) -> DyadicCube:
    top = min(grid.depth, 8 if max_level is None else max_level)
    lev = int(rng.integers(0, top + 1))
    return DyadicCube(lev, int(rng.integers(0, 1 << lev)))


def _blocks(grid: DyadicGrid, rng: np.random.Generator, level: int) -> np.ndarray:
    lev = min(level, grid.depth)
    return np.repeat(rng.standard_normal(1 << lev), grid.n_cells >> lev)


def random_input(grid: DyadicGrid, rng: np.random.Generator, kind: Optional[str] = None,
                 dual: Optional[Weight] = None) -> np.ndarray:
    """One test function on the cells of ``grid``.

    ``dual`` enables the sigma * 1_Q testing functions, which are the
    extremisers of weighted sparse bounds.
    """
    if kind is None:
        kinds = KINDS if dual is not None else KINDS[:-1]
        kind = kinds[int(rng.integers(len(kinds)))]
    if kind == "indicator":
        out = np.zeros(grid.n_cells)
        out[random_cube(grid, rng).cells(grid)] = 1.0
        return out
    if kind == "rademacher":
        out = np.zeros(grid.n_cells)
        for _ in range(int(rng.integers(1, 6))):
            out[random_cube(grid, rng).cells(grid)] += rng.choice((-1.0, 1.0))
        return out
    if kind == "lognormal":
        return np.exp(_blocks(grid, rng, int(rng.integers(1, 8))))
    if kind == "modulated":
        out = np.zeros(grid.n_cells)
        out[random_cube(grid, rng, 4).cells(grid)] = 1.0
        return out * _blocks(grid, rng, int(rng.integers(2, 9)))
    if kind == "dual":
        if dual is None:
            raise ValueError("dual testing functions need a weight")
        out = np.zeros(grid.n_cells)
        out[random_cube(grid, rng).cells(grid)] = 1.0
        return out * dual.density
    raise ValueError(f"unknown input kind {kind!r}")


def trial_seed(master: int, index: int) -> np.random.SeedSequence:
    """Independent per-trial seed derived from (master seed, trial index)."""
    return np.random.SeedSequence([int(master), int(index)])


def trial_rng(master: int, index: int) -> np.random.Generator:
    return np.random.default_rng(trial_seed(master, index))
