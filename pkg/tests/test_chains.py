import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dyadiclab.chains import ChainError, build_weight_chain, h_recursion
from dyadiclab.grid import ROOT, DyadicGrid, lp_norm
from dyadiclab.sparse import SparseFamily, apply_weighted_sparse, random_sparse_family
from dyadiclab.weights import BloomPair, WeightTuple, combine, power_weight, random_log_weight


def _setup(seed, p=(2.0, 3.0), slot=0, depth=7):
    g = DyadicGrid(depth)
    ws = (random_log_weight(g, seed, 1.0), random_log_weight(g, seed + 1, 1.0))
    lam = random_log_weight(g, seed + 2, 1.0)
    tup = WeightTuple(ws, p)
    return g, tup, BloomPair(slot, ws[slot], lam, p[slot])


@given(st.integers(0, 2 ** 32), st.sampled_from([(2.0, 3.0), (4.0, 4.0), (1.5, 6.0)]),
       st.integers(0, 1), st.sampled_from(["A", "B"]))
def test_identities_all_orders(seed, p, slot, side):
    g, tup, pair = _setup(seed, p, slot)
    thetas = (0.2, 0.3, 0.5)
    if side == "A" and tup.p <= 1:
        with pytest.raises(ChainError):
            build_weight_chain(tup, pair, thetas, (0, 1, 2), side)
        return
    for r in (1, 2, 3):
        for order in itertools.permutations(range(3), r):
            ch = build_weight_chain(tup, pair, thetas, order, side)
            assert ch.residual <= 1e-10 and len(ch.weights) == r
            assert ch.theta_complement == pytest.approx(sum(thetas) - sum(thetas[l] for l in order))


def test_chain_validation():
    g, tup, pair = _setup(0)
    with pytest.raises(ChainError):
        build_weight_chain(tup, pair, (0.5, 0.6), (0, 1))
    with pytest.raises(ChainError):
        build_weight_chain(tup, pair, (0.5, 0.5), (0, 0))
    with pytest.raises(ChainError):
        build_weight_chain(tup, pair, (0.5, 0.5), (0,), "C")
    with pytest.raises(ChainError):
        build_weight_chain(tup, BloomPair(0, pair.w, pair.lam, 3.0), (1.0,), (0,))


def test_first_zeta_is_dual_weight():
    g, tup, pair = _setup(4)
    ch = build_weight_chain(tup, pair, (1.0,), (0,))
    assert np.allclose(ch.weights[0].density, pair.w.density ** (1 - 2.0))


@pytest.mark.parametrize("seed", range(5))
def test_single_cube_oracle(seed):
    g, tup, pair = _setup(seed)
    p = pair.p
    ch = build_weight_chain(tup, pair, (1.0,), (0,))
    S = SparseFamily(g, frozenset([ROOT]))
    zeta = ch.weights[0]
    res = h_recursion(np.ones(g.n_cells), S, ch, pair)
    expect = (zeta.total() ** (1 - p) / pair.w.total()) ** (1 / p)
    assert res.ratio == pytest.approx(expect, rel=1e-10)
    # f = zeta is extremal: the ratio is exactly one
    assert h_recursion(zeta.density, S, ch, pair).ratio == pytest.approx(1.0, rel=1e-10)


@given(st.integers(0, 2 ** 32))
def test_recursion_steps_by_hand(seed):
    g, tup, pair = _setup(seed)
    S = random_sparse_family(g, 10, seed, include_root=True)
    thetas = (0.4, 0.6)
    ch = build_weight_chain(tup, pair, thetas, (1, 0))
    f = np.random.default_rng(seed).normal(size=g.n_cells)
    h = f.copy()
    for zeta, l in zip(ch.weights, ch.order):
        nu_l = (pair.w.density / pair.lam.density) ** (thetas[l] / pair.p)
        h = apply_weighted_sparse(S, zeta, h / zeta.density).values * nu_l * zeta.density
    res = h_recursion(f, S, ch, pair)
    assert np.allclose(res.h.values, h, rtol=1e-9)
    assert np.isfinite(res.ratio) and res.ratio > 0


def test_recursion_needs_b_chain():
    g, tup, pair = _setup(1)
    ch = build_weight_chain(tup, pair, (1.0,), (0,), "A")
    with pytest.raises(ChainError):
        h_recursion(np.ones(g.n_cells), SparseFamily(g, frozenset([ROOT])), ch, pair)


def test_power_weight_chain():
    g = DyadicGrid(8)
    w = power_weight(0.5, 0.0, g)
    lam = power_weight(-0.3, 0.0, g)
    tup = WeightTuple((w, power_weight(0.2, 0.0, g)), (2.0, 2.0))
    ch = build_weight_chain(tup, BloomPair(0, w, lam, 2.0), (0.5, 0.5), (0, 1))
    assert ch.residual <= 1e-10
