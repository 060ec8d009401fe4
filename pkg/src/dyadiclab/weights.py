"""Weights with exact cell masses and the Muckenhoupt-type constants.

A weight is stored by its cell masses.  Power weights c*|x - x0|^a also keep
their closed form, so products and powers of power weights sharing one
center are re-integrated exactly; anything else goes through cell-average
densities.  Constants are suprema over the dyadic cubes of the grid and
``math.inf`` is returned whenever a dual or product weight is not locally
integrable (the truncated masses would only hide the divergence).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .grid import DyadicGrid, GridFunction, _ancestor_stack

INF = math.inf
_EXP_TOL = 1e-13


class SingularWeightError(ValueError):
    pass


@dataclass(frozen=True)
class PowerLaw:
    """coef * prod |x - center|^exponent."""

    coef: float
    terms: tuple  # ((center, exponent), ...), exponents nonzero, centers sorted

    def __call__(self, x: np.ndarray) -> np.ndarray:
        out = np.full(np.shape(x), self.coef, dtype=float)
        for c, a in self.terms:
            out = out * np.abs(x - c) ** a
        return out

    @property
    def singular(self) -> bool:
        return any(a <= -1.0 for _, a in self.terms)


@dataclass(frozen=True, eq=False)
class Weight:
    grid: DyadicGrid
    mass: np.ndarray
    singular: bool = False
    law: Optional[PowerLaw] = None
    label: str = ""

    def __post_init__(self):
        m = np.asarray(self.mass, dtype=float)
        if m.shape != (self.grid.n_cells,):
            raise ValueError("mass array does not match the grid")
        if not np.all(m > 0) or not np.all(np.isfinite(m)):
            raise ValueError("weights need positive finite cell masses")
        m.setflags(write=False)
        object.__setattr__(self, "mass", m)

    @property
    def density(self) -> np.ndarray:
        """Cell-average density mass / h."""
        return self.mass / self.grid.cell_width

    def pointwise(self) -> np.ndarray:
        """Density at cell midpoints (closed form when available)."""
        if self.law is not None:
            return self.law(self.grid.midpoints())
        return self.density

    def total(self) -> float:
        return float(self.mass.sum())

    def level_mass(self, level: int) -> np.ndarray:
        return self.grid.level_sums(self.mass, level)

    def level_avg(self, level: int) -> np.ndarray:
        return self.level_mass(level) * (1 << level)

    def as_function(self) -> GridFunction:
        return GridFunction(self.density, self.grid)

    def __mul__(self, c):
        if not np.isscalar(c):
            return NotImplemented
        law = None if self.law is None else PowerLaw(self.law.coef * c, self.law.terms)
        return Weight(self.grid, self.mass * c, self.singular, law, self.label)

    __rmul__ = __mul__

    def power(self, t: float) -> "Weight":
        return combine([(self, t)])


# construction ------------------------------------------------------------

def _interval_integral(t0: np.ndarray, t1: np.ndarray, a: float) -> np.ndarray:
    """int_{t0}^{t1} t^a dt for 0 <= t0 < t1, accurate for thin intervals."""
    out = np.empty_like(t1)
    pos = t0 > 0
    if abs(a + 1.0) < _EXP_TOL:
        out[pos] = np.log1p((t1[pos] - t0[pos]) / t0[pos])
        out[~pos] = np.inf
        return out
    b = a + 1.0
    out[pos] = t0[pos] ** b / b * np.expm1(b * np.log1p((t1[pos] - t0[pos]) / t0[pos]))
    out[~pos] = t1[~pos] ** b / b if b > 0 else np.inf
    return out


def _law_masses(grid: DyadicGrid, coef: float, center: float, a: float) -> tuple[np.ndarray, bool]:
    h = grid.cell_width
    if a == 0.0:
        return np.full(grid.n_cells, coef * h), False
    k = center / h
    if abs(k - round(k)) > 1e-9:
        raise ValueError("power-weight center must be a grid point")
    e = grid.edges()
    x0, x1 = e[:-1], e[1:]
    right = x0 >= center - 1e-15
    t0 = np.where(right, x0 - center, center - x1)
    t1 = np.where(right, x1 - center, center - x0)
    t0 = np.maximum(t0, 0.0)
    singular = a <= -1.0
    if singular:
        # excise the half of each touching cell nearest the singularity
        t0 = np.where(t0 <= 1e-15, 0.5 * h, t0)
    return coef * _interval_integral(t0, t1, a), singular


def lebesgue(grid: DyadicGrid) -> Weight:
    return Weight(grid, np.full(grid.n_cells, grid.cell_width), law=PowerLaw(1.0, ()), label="1")


def power_weight(a: float, c: float = 0.0, grid: Optional[DyadicGrid] = None, coef: float = 1.0) -> Weight:
    """|x - c|^a with exact cell masses.

    For a <= -1 the cells touching c lose the half nearest c and the weight
    is flagged singular: masses stay finite but grow without bound in depth.
    """
    if grid is None:
        raise ValueError("grid is required")
    mass, singular = _law_masses(grid, coef, c, a)
    terms = () if a == 0 else ((float(c), float(a)),)
    return Weight(grid, mass, singular, PowerLaw(coef, terms), label=f"|x-{c:g}|^{a:g}")


def piecewise_weight(grid: DyadicGrid, density) -> Weight:
    d = np.asarray(density, dtype=float)
    return Weight(grid, d * grid.cell_width, label="piecewise")


def random_log_weight(grid: DyadicGrid, seed, amplitude: float = 1.0, n_bumps: int = 12,
                      max_level: Optional[int] = None) -> Weight:
    """exp(amplitude * sum of random signed dyadic indicators)."""
    rng = np.random.default_rng(seed)
    top = grid.depth if max_level is None else min(max_level, grid.depth)
    b = np.zeros(grid.n_cells)
    for _ in range(n_bumps):
        lev = int(rng.integers(0, top + 1))
        j = int(rng.integers(0, 1 << lev))
        sl = slice(j << (grid.depth - lev), (j + 1) << (grid.depth - lev))
        b[sl] += rng.choice((-1.0, 1.0))
    return piecewise_weight(grid, np.exp(amplitude * b))


def combine(factors: Sequence[tuple], coef: float = 1.0) -> Weight:
    """Pointwise product  coef * prod w_k^{t_k}, re-integrated to cell masses."""
    factors = [(w, float(t)) for w, t in factors]
    if not factors:
        raise ValueError("need at least one factor")
    grid = factors[0][0].grid
    if all(w.law is not None for w, _ in factors):
        c_tot = coef
        expo: dict[float, float] = {}
        for w, t in factors:
            c_tot *= w.law.coef ** t
            for c, a in w.law.terms:
                expo[c] = expo.get(c, 0.0) + a * t
        terms = tuple(sorted((c, a) for c, a in expo.items() if abs(a) > _EXP_TOL))
        law = PowerLaw(c_tot, terms)
        if len(terms) <= 1:
            c, a = terms[0] if terms else (0.0, 0.0)
            mass, singular = _law_masses(grid, c_tot, c, a)
            return Weight(grid, mass, singular, law)
        dens = np.full(grid.n_cells, c_tot)
        for c, a in terms:
            m, _ = _law_masses(grid, 1.0, c, a)
            dens = dens * (m / grid.cell_width)
        return Weight(grid, dens * grid.cell_width, law.singular, law)
    dens = np.full(grid.n_cells, coef)
    singular = False
    for w, t in factors:
        dens = dens * w.density ** t
        singular = singular or (w.singular and t > 0)
    return Weight(grid, dens * grid.cell_width, singular)


# Muckenhoupt-type constants ----------------------------------------------

def _levels(grid: DyadicGrid, min_level: int = 0):
    return range(min_level, grid.depth + 1)


def ap_constant(w: Weight, p: float, min_level: int = 0) -> float:
    """max_Q <w>_Q <w^{-1/(p-1)}>_Q^{p-1} over dyadic cubes."""
    if p <= 1:
        raise ValueError("p must exceed 1")
    if w.singular:
        return INF
    dual = w.power(-1.0 / (p - 1.0))
    if dual.singular:
        return INF
    best = 0.0
    for lev in _levels(w.grid, min_level):
        val = w.level_avg(lev) * dual.level_avg(lev) ** (p - 1.0)
        best = max(best, float(val.max()))
    return best


def ainfty_constant(w: Weight, allow_truncated: bool = False, min_level: int = 0) -> float:
    """Fujii-Wilson constant sup_Q w(Q)^{-1} int_Q M^d(w 1_Q)."""
    if w.singular and not allow_truncated:
        raise SingularWeightError("A_inf constant undefined for truncated singular weight")
    g = w.grid
    avgs = [w.level_avg(lev) for lev in range(g.depth + 1)]
    stack = _ancestor_stack(avgs, g)
    # localized maximal function of Q at level l: max over levels >= l
    suffix = np.maximum.accumulate(stack[::-1], axis=0)[::-1]
    best = 0.0
    h = g.cell_width
    for lev in _levels(g, min_level):
        integral = g.level_sums(suffix[lev] * h, lev)
        best = max(best, float((integral / w.level_mass(lev)).max()))
    return best


@dataclass(frozen=True, eq=False)
class WeightTuple:
    weights: tuple
    exponents: tuple

    def __post_init__(self):
        if len(self.weights) != len(self.exponents) or not self.weights:
            raise ValueError("weights and exponents must have the same nonzero length")
        if any(not p > 1 for p in self.exponents):
            raise ValueError("each exponent p_i must lie in (1, inf)")
        object.__setattr__(self, "weights", tuple(self.weights))
        object.__setattr__(self, "exponents", tuple(float(p) for p in self.exponents))

    @property
    def n(self) -> int:
        return len(self.weights)

    @property
    def grid(self) -> DyadicGrid:
        return self.weights[0].grid

    @property
    def p(self) -> float:
        return 1.0 / sum(1.0 / q for q in self.exponents)

    @property
    def dual_exponents(self) -> tuple:
        return tuple(q / (q - 1.0) for q in self.exponents)

    def product(self) -> Weight:
        """w = prod w_i^{p/p_i}."""
        p = self.p
        return combine([(w, p / q) for w, q in zip(self.weights, self.exponents)])

    def duals(self) -> list:
        """sigma_i = w_i^{1 - p_i'}."""
        return [combine([(w, 1.0 - qq)]) for w, qq in zip(self.weights, self.dual_exponents)]

    def replace(self, slot: int, weight: Weight) -> "WeightTuple":
        ws = list(self.weights)
        ws[slot] = weight
        return WeightTuple(tuple(ws), self.exponents)


def multi_ap_constant(tup: WeightTuple, min_level: int = 0) -> float:
    """[w]_{A_p-vector} = sup_Q <prod w_i^{p/p_i}>_Q prod <sigma_i>_Q^{p/p_i'}."""
    prod = tup.product()
    duals = tup.duals()
    if prod.singular or any(s.singular for s in duals):
        return INF
    p = tup.p
    best = 0.0
    for lev in _levels(tup.grid, min_level):
        val = prod.level_avg(lev)
        for s, qq in zip(duals, tup.dual_exponents):
            val = val * s.level_avg(lev) ** (p / qq)
        best = max(best, float(val.max()))
    return best


@dataclass
class FactorizationReport:
    multi: float
    product_constant: float
    dual_constants: list
    consistent: bool

    @property
    def all_finite(self) -> bool:
        return math.isfinite(self.product_constant) and all(math.isfinite(c) for c in self.dual_constants)


def factorization_check(tup: WeightTuple) -> FactorizationReport:
    """Compare [w]_{A_pvec} with [w]_{A_{np}} and each [sigma_i]_{A_{n p_i'}}."""
    n, p = tup.n, tup.p
    multi = multi_ap_constant(tup)
    prod = tup.product()
    prod_c = ap_constant(prod, n * p) if not prod.singular else INF
    dual_c = []
    for s, qq in zip(tup.duals(), tup.dual_exponents):
        dual_c.append(ap_constant(s, n * qq) if not s.singular else INF)
    rep = FactorizationReport(multi, prod_c, dual_c, False)
    rep.consistent = math.isfinite(multi) == rep.all_finite
    return rep


def _rhi_ratios(weights: Sequence[Weight], t: Sequence[float]):
    if any(ti <= 0 for ti in t):
        raise ValueError("exponents t_i must be positive")
    prod = combine(list(zip(weights, t)))
    g = weights[0].grid
    for lev in range(g.depth + 1):
        num = np.ones(1 << lev)
        for w, ti in zip(weights, t):
            num = num * w.level_avg(lev) ** ti
        yield num / prod.level_avg(lev), prod


def rhi_constant(weights: Sequence[Weight], t: Sequence[float]) -> float:
    """sup_Q prod <w_i>_Q^{t_i} / <prod w_i^{t_i}>_Q."""
    if any(w.singular for w in weights):
        return INF
    return max(float(r.max()) for r, _ in _rhi_ratios(weights, t))


def converse_rhi_constant(weights: Sequence[Weight], t: Sequence[float]) -> float:
    """sup_Q <prod w_i^{t_i}>_Q / prod <w_i>_Q^{t_i}."""
    best = 0.0
    for r, prod in _rhi_ratios(weights, t):
        if prod.singular:
            return INF
        best = max(best, float((1.0 / r).max()))
    return best


@dataclass(frozen=True, eq=False)
class BloomPair:
    slot: int
    w: Weight
    lam: Weight
    p: float
    theta: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError("theta must lie in [0, 1]")
        if not self.p > 1:
            raise ValueError("p must exceed 1")

    def with_theta(self, theta: float) -> "BloomPair":
        return BloomPair(self.slot, self.w, self.lam, self.p, theta)


def bloom_nu(pair: BloomPair) -> Weight:
    """nu^theta = w^{theta/p} lam^{-theta/p}."""
    t = pair.theta / pair.p
    return combine([(pair.w, t), (pair.lam, -t)])
