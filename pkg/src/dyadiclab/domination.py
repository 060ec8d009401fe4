"""Pointwise sparse domination of iterated commutators.

For each symbol b (slot i) a term either keeps |b(x) - b_Q| outside the
averages (gamma = 1) or moves |b - b_Q| inside the average of f_i
(gamma = 2).  The 2^{sum k_i} resulting forms are summed over stopping
families built on the standard grid and on the 1/3-shifted grid.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .czo import CommutatorSpec, KernelSpec, apply_operator, iterated_commutator
from .grid import ROOT, DyadicCube, DyadicGrid, values_of
from .sparse import SparseFamily, carleson_constant

CAP = 1e6
THRESHOLD = 4.0


@dataclass
class Domination:
    families: list
    constant: float
    output: np.ndarray
    majorant: np.ndarray
    counterexample: Optional[int] = None
    carleson: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.constant <= CAP


def _gammas(m: int):
    return list(itertools.product((1, 2), repeat=m))


def _stop_functions(fs: list, pairs: list, g: np.ndarray, cells: np.ndarray) -> list:
    """Non-negative functions on a stopping cube whose averages control the stopping."""
    out = [np.abs(f[cells]) for f in fs]
    devs = [np.abs(b[cells] - b[cells].mean()) for _, b in pairs]
    m = len(pairs)
    for gamma in _gammas(m):
        inside = [k for k in range(m) if gamma[k] == 2]
        outside = [k for k in range(m) if gamma[k] == 1]
        for slot in {pairs[k][0] for k in inside}:
            prod = np.abs(fs[slot][cells])
            for k in inside:
                if pairs[k][0] == slot:
                    prod = prod * devs[k]
            out.append(prod)
        if outside:
            out.append(np.prod([devs[k] for k in outside], axis=0))
    out.append(np.abs(g[cells] - g[cells].mean()))
    return out


def stopping_family(fs: list, pairs: list, g: np.ndarray, grid: DyadicGrid,
                    threshold: float = THRESHOLD) -> SparseFamily:
    cubes = []
    stack = [ROOT]
    while stack:
        q = stack.pop()
        cubes.append(q)
        cells = q.cells(grid)
        funcs = _stop_functions(fs, pairs, g, cells)
        alphas = [threshold * float(u.mean()) for u in funcs]
        covered = np.zeros(cells.size, dtype=bool)
        for m in range(q.level + 1, grid.depth + 1):
            k = cells.size >> (m - q.level)
            hit = np.zeros(cells.size // k, dtype=bool)
            for u, a in zip(funcs, alphas):
                if a > 0:
                    hit |= u.reshape(-1, k).mean(axis=1) > a
            hit &= ~covered.reshape(-1, k)[:, 0]
            if hit.any():
                base = q.index << (m - q.level)
                stack.extend(DyadicCube(m, base + int(j)) for j in np.flatnonzero(hit))
                covered |= np.repeat(hit, k)
    return SparseFamily(grid, frozenset(cubes), 0.5)


def gamma_forms(S: SparseFamily, fs: list, pairs: list) -> np.ndarray:
    """sum over gamma of A^gamma_{S,b}(f)(x), on the cells of S.grid."""
    grid = S.grid
    n_cells = grid.n_cells
    m = len(pairs)
    total = np.zeros(n_cells)
    for lev, mask in S.level_masks().items():
        fb = [grid.level_blocks(f, lev)[mask] for f in fs]
        bb = [grid.level_blocks(b, lev)[mask] for _, b in pairs]
        devs = [np.abs(x - x.mean(axis=1, keepdims=True)) for x in bb]
        acc = np.zeros_like(fb[0])
        for gamma in _gammas(m):
            outer = np.ones_like(fb[0])
            inner = [np.abs(f) for f in fb]
            for k, gk in enumerate(gamma):
                if gk == 1:
                    outer = outer * devs[k]
                else:
                    slot = pairs[k][0]
                    inner[slot] = inner[slot] * devs[k]
            avg = np.prod([u.mean(axis=1) for u in inner], axis=0)
            acc += outer * avg[:, None]
        blocks = np.zeros((1 << lev, n_cells >> lev))
        blocks[mask] = acc
        total += grid.unblock(blocks)
    return total


def dominate_commutator(spec: CommutatorSpec, K: KernelSpec, fs: Sequence,
                        grid: Optional[DyadicGrid] = None, shifts: Sequence[float] = (0.0, 1.0 / 3.0),
                        threshold: float = THRESHOLD) -> Domination:
    """Smallest C with |C_b(T)(f)(x)| <= C sum_gamma A^gamma_{S,b}(f)(x) at every cell."""
    grid = grid or fs[0].grid
    vals = [values_of(f).astype(float) for f in fs]
    pairs = spec.pairs()
    g = iterated_commutator(K, spec, vals, grid).values
    families, lam = [], []
    rhs = np.zeros(grid.n_cells)
    for s in shifts:
        gr = grid.with_shift(s)
        S = stopping_family(vals, pairs, g, gr, threshold)
        families.append(S)
        lam.append(carleson_constant(S))
        rhs += gamma_forms(S, vals, pairs)
    lhs = np.abs(g)
    # floating-point floor: the size of the individual terms of the expansion
    scale = float(np.abs(apply_operator(K, vals, grid).values).max())
    for _, b in pairs:
        scale *= float(np.abs(b).max())
    pos = lhs > 1e-12 * scale
    if not pos.any():
        return Domination(families, 0.0, g, rhs, None, lam)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(pos, lhs / np.where(rhs > 0, rhs, 0.0), 0.0)
    ratio[pos & (rhs <= 0)] = math.inf
    worst = int(np.argmax(ratio))
    c = float(ratio[worst])
    return Domination(families, c, g, rhs, worst if c > CAP else None, lam)
