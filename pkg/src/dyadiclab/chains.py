"""Weight chains for iterated sparse averaging and the h-recursion."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .grid import GridFunction, lp_norm, values_of
from .sparse import SparseFamily, apply_weighted_sparse
from .weights import BloomPair, Weight, WeightTuple, bloom_nu, combine

IDENTITY_TOL = 1e-10


class ChainError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class WeightChain:
    slot: int
    side: str                 # "B" (zeta chain) or "A" (eta chain)
    thetas: tuple             # theta_1..theta_k of the slot
    order: tuple              # permutation of the chain's index set
    weights: tuple            # zeta_1..zeta_m or eta_1..eta_m
    exponent: float           # p_i for the B-chain, global p for the A-chain
    residual: float           # worst relative identity error

    @property
    def complement(self) -> tuple:
        return tuple(l for l in range(len(self.thetas)) if l not in self.order)

    @property
    def theta_complement(self) -> float:
        return float(sum(self.thetas[l] for l in self.complement))


def _rel(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b) / np.maximum(np.abs(b), np.finfo(float).tiny)))


def _target_weight(tup: WeightTuple, pair: BloomPair) -> Weight:
    """v = lam_i^{p/p_i} prod_{j != i} w_j^{p/p_j}."""
    p = tup.p
    fac = [(pair.lam if j == pair.slot else w, p / q)
           for j, (w, q) in enumerate(zip(tup.weights, tup.exponents))]
    return combine(fac)


def build_weight_chain(tup: WeightTuple, pair: BloomPair, thetas: Sequence[float],
                       permutation: Sequence[int], side: str = "B") -> WeightChain:
    """Chain weights for one ordering of B_i (zeta) or A_i (eta).

    B:  zeta_1 = w_i^{1-p_i'},  zeta_k = w_i^{1-p_i'} nu^{p_i' sum_{s<k} theta}
    A:  eta_1 = v,              eta_k = nu^{p sum_{t<k} theta} v
    with nu = w_i^{1/p_i} lam_i^{-1/p_i}.  The defining identities are
    checked pointwise at the cell midpoints.
    """
    thetas = tuple(float(t) for t in thetas)
    if any(not 0 <= t <= 1 for t in thetas) or abs(sum(thetas) - 1) > 1e-12:
        raise ChainError("thetas must lie in [0, 1] and sum to 1")
    order = tuple(int(l) for l in permutation)
    if len(set(order)) != len(order) or any(not 0 <= l < len(thetas) for l in order) or not order:
        raise ChainError("permutation must list distinct theta indices")
    if side not in ("A", "B"):
        raise ChainError("side must be 'A' or 'B'")
    i = pair.slot
    if tup.weights[i] is not pair.w:
        tup = tup.replace(i, pair.w)
    pi = tup.exponents[i]
    if abs(pair.p - pi) > 1e-12:
        raise ChainError("Bloom pair exponent differs from the tuple exponent")
    nu = bloom_nu(pair.with_theta(1.0))
    rest = [l for l in range(len(thetas)) if l not in order]
    theta_c = sum(thetas[l] for l in rest)

    def nu_pw(t):
        return nu.pointwise() ** t

    if side == "B":
        q = pi / (pi - 1.0)
        base = combine([(pair.w, 1.0 - q)])
        weights = []
        acc = 0.0
        for k, l in enumerate(order):
            weights.append(base if k == 0 else combine([(base, 1.0), (nu, q * acc)]))
            acc += thetas[l]
        z = [w.pointwise() for w in weights]
        w_pt, lam_pt = pair.w.pointwise(), pair.lam.pointwise()
        res = _rel(z[0] ** (1 - pi), w_pt)
        for k in range(1, len(z)):
            lhs = (nu_pw(thetas[order[k - 1]]) * z[k - 1]) ** pi * z[k] ** (1 - pi)
            res = max(res, _rel(lhs, z[k - 1]))
            s = sum(thetas[order[t]] for t in range(k))
            alt = lam_pt ** ((1 - q) * s) * (w_pt ** (1 - q)) ** (1 - s)
            res = max(res, _rel(z[k], alt))
        last = (nu_pw(thetas[order[-1]]) * z[-1]) ** pi * nu_pw(pi * theta_c) * lam_pt
        res = max(res, _rel(last, z[-1]))
        exponent = pi
    else:
        p = tup.p
        if not p > 1:
            raise ChainError("the dual chain needs p > 1")
        q = p / (p - 1.0)
        v = _target_weight(tup, pair)
        weights = []
        acc = 0.0
        for k, l in enumerate(order):
            weights.append(v if k == 0 else combine([(v, 1.0), (nu, p * acc)]))
            acc += thetas[l]
        e = [w.pointwise() for w in weights]
        v_pt = v.pointwise()
        prod_pt = tup.product().pointwise()
        res = 0.0
        for k in range(1, len(e)):
            lhs = (nu_pw(thetas[order[k - 1]]) * e[k - 1]) ** q * e[k] ** (1 - q)
            res = max(res, _rel(lhs, e[k - 1]))
            s = sum(thetas[order[t]] for t in range(k))
            alt = prod_pt ** s * v_pt ** (1 - s)
            res = max(res, _rel(e[k], alt))
        # the eta chain runs over A_i itself, so its tail exponent is theta_{A_i}
        target = nu_pw(p * sum(thetas[l] for l in order)) * v_pt
        last = (nu_pw(thetas[order[-1]]) * e[-1]) ** q * target ** (1 - q)
        res = max(res, _rel(last, e[-1]))
        exponent = p
    if not res <= IDENTITY_TOL:
        raise ChainError(f"chain inconsistency (relative error {res:.3e})")
    return WeightChain(i, side, thetas, order, tuple(weights), exponent, res)


@dataclass
class HResult:
    h: GridFunction
    ratio: float


def h_recursion(f, S: SparseFamily, chain: WeightChain, pair: BloomPair) -> HResult:
    """h_k = A^{zeta_k}_S(h_{k-1} zeta_k^{-1}) nu^{theta_{l_k}} zeta_k, starting from h_0 = f.

    Returns h after the last step and
    ||h||_{L^{p_i}(nu^{p_i theta_A} lam_i)} / ||f||_{L^{p_i}(w_i)}.
    """
    if chain.side != "B":
        raise ChainError("h_recursion runs along the zeta chain")
    grid = pair.w.grid
    h = values_of(f).astype(float)
    for zeta, l in zip(chain.weights, chain.order):
        z = zeta.density
        avg = apply_weighted_sparse(S, zeta, h / z).values
        h = avg * bloom_nu(pair.with_theta(chain.thetas[l])).density * z
    p = chain.exponent
    nu = bloom_nu(pair.with_theta(1.0))
    target = combine([(nu, p * chain.theta_complement), (pair.lam, 1.0)])
    den = lp_norm(f, pair.w, p)
    num = lp_norm(h, target, p)
    ratio = 0.0 if num == 0 else (num / den if den > 0 else math.inf)
    return HResult(GridFunction(h, grid), ratio)
