"""Dyadic geometry on [0, 1): grids, cubes, piecewise-constant functions.

Everything here works on the finest-cell representation.  A grid of depth L
has 2**L cells of width h = 2**-L; a dyadic cube at level l is a run of
2**(L-l) consecutive cells.  The optional 1/3-shifted grid rotates the cube
system cyclically by ``N // 3`` cells, i.e. it is the dyadic system of the
circle R/Z with origin near 1/3.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterator, Optional

import numpy as np


class GridError(ValueError):
    pass


class DegenerateMeasureError(ValueError):
    """Raised when a measure vanishes on a cube where an average is needed."""


@dataclass(frozen=True)
class DyadicGrid:
    depth: int
    shift: float = 0.0

    def __post_init__(self):
        if self.depth < 1:
            raise GridError(f"depth must be >= 1, got {self.depth}")
        if self.shift not in (0.0, 1.0 / 3.0):
            raise GridError("shift must be 0 or 1/3")

    @property
    def n_cells(self) -> int:
        return 1 << self.depth

    @property
    def cell_width(self) -> float:
        return 2.0 ** -self.depth

    @property
    def offset(self) -> int:
        """Cyclic cell offset of the cube system."""
        return 0 if self.shift == 0.0 else self.n_cells // 3

    def midpoints(self) -> np.ndarray:
        return (np.arange(self.n_cells) + 0.5) * self.cell_width

    def edges(self) -> np.ndarray:
        return np.arange(self.n_cells + 1) * self.cell_width

    def cubes(self, level: Optional[int] = None, min_level: int = 0) -> Iterator["DyadicCube"]:
        levels = [level] if level is not None else range(min_level, self.depth + 1)
        for lev in levels:
            for j in range(1 << lev):
                yield DyadicCube(lev, j)

    def with_shift(self, shift: float) -> "DyadicGrid":
        return DyadicGrid(self.depth, shift)

    # level-wise primitives ---------------------------------------------

    def _rot(self, values: np.ndarray) -> np.ndarray:
        off = self.offset
        return values if off == 0 else np.roll(values, -off)

    def _unrot(self, values: np.ndarray) -> np.ndarray:
        off = self.offset
        return values if off == 0 else np.roll(values, off)

    def level_sums(self, values: np.ndarray, level: int) -> np.ndarray:
        """Sum of ``values`` over each cube of ``level`` (length 2**level)."""
        v = self._rot(np.asarray(values, dtype=float))
        return v.reshape(1 << level, -1).sum(axis=1)

    def level_blocks(self, values: np.ndarray, level: int) -> np.ndarray:
        """View of cell values as a (2**level, cells-per-cube) array."""
        v = self._rot(np.asarray(values, dtype=float))
        return v.reshape(1 << level, -1)

    def expand(self, level_values: np.ndarray, level: int) -> np.ndarray:
        """Broadcast one value per cube of ``level`` back to the cells."""
        rep = np.repeat(np.asarray(level_values, dtype=float), self.n_cells >> level)
        return self._unrot(rep)

    def unblock(self, blocks: np.ndarray) -> np.ndarray:
        return self._unrot(np.asarray(blocks).reshape(-1))


@dataclass(frozen=True, order=True)
class DyadicCube:
    level: int
    index: int

    def __post_init__(self):
        if self.level < 0 or not 0 <= self.index < (1 << self.level):
            raise GridError(f"invalid cube level={self.level} index={self.index}")

    @property
    def measure(self) -> float:
        return 2.0 ** -self.level

    @property
    def side(self) -> float:
        return self.measure

    def interval(self, grid: Optional[DyadicGrid] = None) -> tuple[float, float]:
        shift = 0.0 if grid is None else grid.offset * grid.cell_width
        a = self.index * self.measure + shift
        return (a, a + self.measure)

    def parent(self) -> "DyadicCube":
        if self.level == 0:
            raise GridError("the unit cube has no parent")
        return DyadicCube(self.level - 1, self.index >> 1)

    def children(self) -> tuple["DyadicCube", "DyadicCube"]:
        return (DyadicCube(self.level + 1, 2 * self.index),
                DyadicCube(self.level + 1, 2 * self.index + 1))

    def ancestor(self, level: int) -> "DyadicCube":
        if level > self.level:
            raise GridError("ancestor level must not exceed cube level")
        return DyadicCube(level, self.index >> (self.level - level))

    def contains(self, other: "DyadicCube") -> bool:
        return other.level >= self.level and (other.index >> (other.level - self.level)) == self.index

    def cell_slice(self, grid: DyadicGrid) -> slice:
        """Cell range in the rotated frame of ``grid``."""
        if self.level > grid.depth:
            raise GridError("cube finer than the grid")
        m = grid.n_cells >> self.level
        return slice(self.index * m, (self.index + 1) * m)

    def cells(self, grid: DyadicGrid) -> np.ndarray:
        sl = self.cell_slice(grid)
        idx = np.arange(sl.start, sl.stop)
        if grid.offset:
            idx = (idx + grid.offset) % grid.n_cells
        return idx

    def translate(self, k: int) -> "DyadicCube":
        return DyadicCube(self.level, self.index + k)


ROOT = DyadicCube(0, 0)


def cube_of_cell(grid: DyadicGrid, cell: int, level: int) -> DyadicCube:
    """The cube of ``level`` containing finest cell ``cell``."""
    rot = (cell - grid.offset) % grid.n_cells
    return DyadicCube(level, rot >> (grid.depth - level))


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Piecewise-constant function: one value per finest cell."""

    values: np.ndarray
    grid: DyadicGrid
    may_diverge: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != (self.grid.n_cells,):
            raise GridError(f"expected {self.grid.n_cells} values, got shape {v.shape}")
        if not self.may_diverge and not np.all(np.isfinite(v)):
            raise GridError("non-finite values in a GridFunction not flagged may_diverge")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_callable(cls, grid: DyadicGrid, fn) -> "GridFunction":
        return cls(fn(grid.midpoints()), grid)

    @classmethod
    def constant(cls, grid: DyadicGrid, c: float) -> "GridFunction":
        return cls(np.full(grid.n_cells, float(c)), grid)

    @classmethod
    def indicator(cls, grid: DyadicGrid, a: float, b: float) -> "GridFunction":
        x = grid.midpoints()
        return cls(((x >= a) & (x < b)).astype(float), grid)

    @classmethod
    def cube_indicator(cls, grid: DyadicGrid, cube: DyadicCube) -> "GridFunction":
        v = np.zeros(grid.n_cells)
        v[cube.cells(grid)] = 1.0
        return cls(v, grid)

    def __array__(self, dtype=None, copy=None):
        return self.values if dtype is None else self.values.astype(dtype)

    def _wrap(self, other):
        return other.values if isinstance(other, GridFunction) else other

    def __add__(self, other):
        return GridFunction(self.values + self._wrap(other), self.grid)

    __radd__ = __add__

    def __sub__(self, other):
        return GridFunction(self.values - self._wrap(other), self.grid)

    def __rsub__(self, other):
        return GridFunction(self._wrap(other) - self.values, self.grid)

    def __mul__(self, other):
        return GridFunction(self.values * self._wrap(other), self.grid)

    __rmul__ = __mul__

    def __truediv__(self, other):
        return GridFunction(self.values / self._wrap(other), self.grid)

    def __neg__(self):
        return GridFunction(-self.values, self.grid)

    def __pow__(self, k):
        return GridFunction(self.values ** k, self.grid)

    def __abs__(self):
        return GridFunction(np.abs(self.values), self.grid)

    def restrict(self, cube: DyadicCube) -> np.ndarray:
        return self.values[cube.cells(self.grid)]


def values_of(f) -> np.ndarray:
    if isinstance(f, GridFunction):
        return f.values
    return np.asarray(f, dtype=float)


# averages, norms, maximal functions, medians ------------------------------

def cube_average(f, Q: DyadicCube, grid: DyadicGrid, mu=None) -> float:
    """Average of f over Q, against Lebesgue measure or the weight ``mu``."""
    v = values_of(f)
    cells = Q.cells(grid)
    if mu is None:
        return float(v[cells].mean())
    m = mu.mass[cells]
    total = m.sum()
    if not total > 0:
        raise DegenerateMeasureError("degenerate measure on cube")
    return float((v[cells] * m).sum() / total)


def level_averages(f, grid: DyadicGrid, level: int, mu=None) -> np.ndarray:
    v = values_of(f)
    if mu is None:
        return grid.level_blocks(v, level).mean(axis=1)
    m = grid.level_sums(mu.mass, level)
    if np.any(m <= 0):
        raise DegenerateMeasureError("degenerate measure on cube")
    return grid.level_sums(v * mu.mass, level) / m


def lp_norm(f, w=None, p: float = 2.0, grid: Optional[DyadicGrid] = None) -> float:
    """(sum |f|^p w(cell))^(1/p) with exact cell masses; Lebesgue if w is None."""
    if p <= 0:
        raise ValueError("p must be positive")
    v = np.abs(values_of(f))
    if w is None:
        g = grid or f.grid
        mass = np.full(v.shape, g.cell_width)
    else:
        mass = w.mass
    s = float((v ** p * mass).sum())
    return s ** (1.0 / p)


def weak_lp_norm(f, v=None, p: float = 2.0, grid: Optional[DyadicGrid] = None) -> float:
    """sup_t t * v({|f| > t})^(1/p), evaluated exactly on the sorted level sets."""
    if p <= 0:
        raise ValueError("p must be positive")
    a = np.abs(values_of(f))
    if v is None:
        g = grid or f.grid
        mass = np.full(a.shape, g.cell_width)
    else:
        mass = v.mass
    order = np.argsort(-a, kind="stable")
    a_sorted = a[order]
    cum = np.cumsum(mass[order])
    if a_sorted.size == 0 or a_sorted[0] == 0:
        return 0.0
    return float(np.max(a_sorted * cum ** (1.0 / p)))


def _ancestor_stack(vals_per_level: list[np.ndarray], grid: DyadicGrid) -> np.ndarray:
    return np.stack([grid.expand(v, lev) for lev, v in enumerate(vals_per_level)])


def dyadic_maximal(f, grid: Optional[DyadicGrid] = None, sigma=None, r: float = 1.0) -> GridFunction:
    """M^d_{r,sigma} f(x) = sup over dyadic Q containing x of (<|f|^r>_Q^sigma)^(1/r)."""
    if r < 1:
        raise ValueError("r must be >= 1")
    g = grid or f.grid
    a = np.abs(values_of(f)) ** r
    avgs = [level_averages(a, g, lev, sigma) for lev in range(g.depth + 1)]
    out = _ancestor_stack(avgs, g).max(axis=0) ** (1.0 / r)
    return GridFunction(out, g)


def median(b, Q: DyadicCube, grid: Optional[DyadicGrid] = None) -> float:
    """Lower median of b on Q (cells have equal Lebesgue measure)."""
    g = grid or b.grid
    vals = np.sort(values_of(b)[Q.cells(g)])
    return float(vals[(vals.size - 1) // 2])
