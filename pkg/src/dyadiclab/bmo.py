"""Weighted BMO norms, the John-Nirenberg functional and random BMO symbols."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import DegenerateMeasureError, GridFunction, values_of
from .sparse import SparseFamily, random_sparse_family
from .weights import SingularWeightError, Weight, combine


def _check_positive(m: np.ndarray):
    if np.any(m <= 0):
        raise DegenerateMeasureError("degenerate measure on cube")


def oscillation_profile(b, nu: Weight, sigma: Optional[Weight] = None, tilde: bool = False,
                        coarsest_level: int = 0) -> list:
    """Per-level arrays of normalized oscillations.

    Plain:  nu(Q)^{-1} int_Q |b - b_Q|
    Bloom:  (nu sigma)(Q)^{-1} int_Q |b - b_Q| sigma, with b_Q^sigma if ``tilde``.
    """
    grid = nu.grid
    bv = values_of(b)
    if sigma is None:
        dens = np.full(grid.n_cells, grid.cell_width)
        norm = nu
    else:
        dens = sigma.mass
        norm = combine([(nu, 1.0), (sigma, 1.0)])
    out = []
    for lev in range(coarsest_level, grid.depth + 1):
        blocks = grid.level_blocks(bv, lev)
        if tilde:
            sb = grid.level_blocks(dens, lev)
            centre = (blocks * sb).sum(axis=1) / sb.sum(axis=1)
        else:
            centre = blocks.mean(axis=1)
        dev = np.abs(blocks - centre[:, None])
        osc = (dev * grid.level_blocks(dens, lev)).sum(axis=1)
        m = norm.level_mass(lev)
        _check_positive(m)
        out.append(osc / m)
    return out


def bmo_norm(b, nu: Weight, coarsest_level: int = 0) -> float:
    return max(float(v.max()) for v in oscillation_profile(b, nu, coarsest_level=coarsest_level))


def bloom_bmo_norm(b, nu: Weight, sigma: Weight, coarsest_level: int = 0) -> float:
    prof = oscillation_profile(b, nu, sigma, coarsest_level=coarsest_level)
    return max(float(v.max()) for v in prof)


def tilde_bmo_norm(b, nu: Weight, sigma: Weight, coarsest_level: int = 0) -> float:
    prof = oscillation_profile(b, nu, sigma, tilde=True, coarsest_level=coarsest_level)
    return max(float(v.max()) for v in prof)


@dataclass(frozen=True, eq=False)
class BmoSpec:
    b: GridFunction
    nu: Weight
    sigma: Optional[Weight] = None
    coarsest_level: int = 0

    def norm(self) -> float:
        return bmo_norm(self.b, self.nu, self.coarsest_level)

    def bloom(self) -> float:
        return bloom_bmo_norm(self.b, self.nu, self._sigma(), self.coarsest_level)

    def tilde(self) -> float:
        return tilde_bmo_norm(self.b, self.nu, self._sigma(), self.coarsest_level)

    def _sigma(self) -> Weight:
        if self.sigma is None:
            raise ValueError("this norm needs sigma")
        return self.sigma


def jn_functional(b, mu: Weight, lam: Weight, q: float, coarsest_level: int = 0) -> float:
    """sup_Q (eta(Q)^{-1} int_Q |b - b_Q|^{q'} sigma)^{1/q'}, sigma = mu^{1-q'}, eta = lam^{1-q'}."""
    if not q > 1:
        raise ValueError("q must exceed 1")
    qq = q / (q - 1.0)
    sigma = combine([(mu, 1.0 - qq)])
    eta = combine([(lam, 1.0 - qq)])
    if sigma.singular or eta.singular:
        raise SingularWeightError("sigma or eta mass diverges")
    grid = mu.grid
    bv = values_of(b)
    best = 0.0
    for lev in range(coarsest_level, grid.depth + 1):
        blocks = grid.level_blocks(bv, lev)
        dev = np.abs(blocks - blocks.mean(axis=1)[:, None]) ** qq
        val = (dev * grid.level_blocks(sigma.mass, lev)).sum(axis=1) / eta.level_mass(lev)
        best = max(best, float(val.max()))
    return best ** (1.0 / qq)


def sparse_sum(S: SparseFamily, coeffs: dict) -> np.ndarray:
    grid = S.grid
    out = np.zeros(grid.n_cells)
    for q, c in coeffs.items():
        out[q.cells(grid)] += c
    return out


def bmo_from_family(nu: Weight, cubes, signs) -> GridFunction:
    """sum eps_Q <nu>_Q 1_Q on the grid of nu (cubes may come from a coarser grid)."""
    grid = nu.grid
    out = np.zeros(grid.n_cells)
    for q, e in zip(cubes, signs):
        cells = q.cells(grid)
        out[cells] += e * float(nu.mass[cells].sum()) / q.measure
    return GridFunction(out, grid)


def random_bmo_parts(nu: Weight, seed, complexity: int, max_level: Optional[int] = None):
    """(b, family, signs) for b = sum eps_Q <nu>_Q 1_Q over a random 1/2-sparse family."""
    grid = nu.grid
    rng = np.random.default_rng(seed)
    S = random_sparse_family(grid, complexity, rng.integers(2**63), 0.5, max_level, include_root=True)
    signs = {q: float(rng.choice((-1.0, 1.0))) for q in sorted(S.cubes)}
    coeffs = {q: e * float(nu.mass[q.cells(grid)].sum()) / q.measure for q, e in signs.items()}
    b = GridFunction(sparse_sum(S, coeffs), grid)
    return b, S, signs


def random_bmo(nu: Weight, seed, complexity: int, max_level: Optional[int] = None) -> GridFunction:
    """Random symbol with bmo_norm(b, nu) <= 2 * Carleson constant of its family (w.r.t. nu)."""
    return random_bmo_parts(nu, seed, complexity, max_level)[0]
