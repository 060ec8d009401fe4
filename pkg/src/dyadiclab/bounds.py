"""Randomized norm checks for sparse operators (Carleson, Fefferman-Stein, multilinear)."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .grid import dyadic_maximal, lp_norm, values_of
from .probes import random_input, trial_rng
from .sparse import SparseFamily, apply_sparse, apply_weighted_sparse
from .weights import Weight, WeightTuple, ainfty_constant, multi_ap_constant, piecewise_weight


@dataclass
class NormCheck:
    ratio: float
    reference: float
    trials: int

    @property
    def normalized(self) -> float:
        return self.ratio / self.reference if self.reference > 0 else math.inf


def weighted_sparse_norm_check(S: SparseFamily, sigma: Weight, p: float, trials: int = 200,
                               seed: int = 0) -> NormCheck:
    """max ||A_S^sigma f||_{L^p(sigma)} / ||f||_{L^p(sigma)}, against [sigma]_{A_inf}."""
    if not p > 1:
        raise ValueError("p must exceed 1")
    best = 0.0
    for t in range(trials):
        f = random_input(S.grid, trial_rng(seed, t))
        den = lp_norm(f, sigma, p)
        if den > 0:
            best = max(best, lp_norm(apply_weighted_sparse(S, sigma, f), sigma, p) / den)
    return NormCheck(best, ainfty_constant(sigma, allow_truncated=True), trials)


def _fs_factor(p: float, r: float) -> float:
    if not p > 1 or not r > 1:
        raise ValueError("need p > 1 and r > 1")
    pp = p / (p - 1.0)
    rr = r / (r - 1.0)
    return pp * rr ** (1.0 / pp)


def maximal_weight(w: Weight, r: float, sigma: Optional[Weight] = None) -> Weight:
    """Cell-wise M^d_{r,sigma} applied to the density of w, as a weight."""
    return piecewise_weight(w.grid, dyadic_maximal(w.density, w.grid, sigma, r).values)


def fs_check(S: SparseFamily, f, w: Weight, p: float, r: float) -> float:
    """||A_S f||_{L^p(w)} / (p' (r')^{1/p'} ||f||_{L^p(M^d_r w)})."""
    c = _fs_factor(p, r)
    num = lp_norm(apply_sparse(S, [f]), w, p)
    if num == 0:
        return 0.0
    return num / (c * lp_norm(f, maximal_weight(w, r), p))


def weighted_fs_check(S: SparseFamily, f, w: Weight, sigma: Weight, p: float, r: float) -> float:
    """||A_S^sigma f||_{L^p(w sigma)} / (p' (r')^{1/p'} ||f||_{L^p(sigma M^d_{r,sigma} w)})."""
    c = _fs_factor(p, r)
    ws = piecewise_weight(w.grid, w.density * sigma.density)
    num = lp_norm(apply_weighted_sparse(S, sigma, f), ws, p)
    if num == 0:
        return 0.0
    mw = dyadic_maximal(w.density, w.grid, sigma, r).values
    rhs_w = piecewise_weight(w.grid, mw * sigma.density)
    return num / (c * lp_norm(f, rhs_w, p))


@dataclass
class LMSReport:
    ratio: float
    sum_ratio: Optional[float]
    constant: float
    power: float


def lms_bound_check(S: SparseFamily, tup: WeightTuple, trials: int = 100, seed: int = 0) -> LMSReport:
    """Sparse bound against [w]_{A_pvec}^{max(1, p_i'/p)} prod ||f_i||_{L^{p_i}(w_i)}.

    For p <= 1 the l^p-sum form (sum_Q prod <|f_i|>_Q^p w(Q))^{1/p} is also
    tested, with power max p_i'/p.
    """
    const = multi_ap_constant(tup)
    if not math.isfinite(const):
        raise ValueError("tuple has infinite A_pvec constant")
    p = tup.p
    power = max([1.0] + [q / p for q in tup.dual_exponents])
    sum_power = max(q / p for q in tup.dual_exponents)
    w = tup.product()
    duals = tup.duals()
    grid = S.grid
    masks = S.level_masks()
    best, best_sum = 0.0, 0.0
    for t in range(trials):
        rng = trial_rng(seed, t)
        fs = [random_input(grid, rng, dual=s) for s in duals]
        den = math.prod(lp_norm(f, wi, qi) for f, wi, qi in zip(fs, tup.weights, tup.exponents))
        if den == 0:
            continue
        num = lp_norm(apply_sparse(S, fs), w, p)
        best = max(best, num / (const ** power * den))
        if p <= 1:
            tot = 0.0
            for lev, mask in masks.items():
                prod = np.ones(1 << lev)
                for f in fs:
                    prod = prod * grid.level_blocks(np.abs(values_of(f)), lev).mean(axis=1)
                tot += float((prod[mask] ** p * w.level_mass(lev)[mask]).sum())
            best_sum = max(best_sum, tot ** (1.0 / p) / (const ** sum_power * den))
    return LMSReport(best, best_sum if p <= 1 else None, const, power)
