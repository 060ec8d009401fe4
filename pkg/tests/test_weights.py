import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dyadiclab.grid import ROOT, DyadicCube, DyadicGrid
from dyadiclab.weights import (INF, BloomPair, SingularWeightError, WeightTuple, ainfty_constant, ap_constant,
                               bloom_nu, combine, converse_rhi_constant, factorization_check, lebesgue,
                               multi_ap_constant, piecewise_weight, power_weight, random_log_weight,
                               rhi_constant)

exps = st.floats(-0.9, 3.0).filter(lambda a: abs(a) > 1e-3)
centers = st.sampled_from([0.0, 0.25, 0.5, 1.0])


def _closed_form_masses(grid, a, c):
    e = grid.edges()
    out = []
    for x0, x1 in zip(e[:-1], e[1:]):
        def F(t):
            return math.copysign(abs(t) ** (a + 1) / (a + 1), t)
        out.append(F(x1 - c) - F(x0 - c))
    return np.array(out)


@given(exps, centers)
def test_power_masses_match_antiderivative(a, c):
    g = DyadicGrid(8)
    w = power_weight(a, c, g)
    assert np.allclose(w.mass, _closed_form_masses(g, a, c), rtol=1e-9, atol=0)
    assert not w.singular


def test_power_weight_examples():
    g = DyadicGrid(10)
    assert np.all(power_weight(0.0, 0.0, g).mass == g.cell_width)
    assert power_weight(1.0, 0.0, g).mass[0] == pytest.approx(g.cell_width ** 2 / 2, rel=1e-14)
    with pytest.raises(ValueError):
        power_weight(1.0, 0.3, g)


def test_singular_power_weight_diverges_with_depth():
    avgs = []
    for L in range(8, 14):
        g = DyadicGrid(L)
        w = power_weight(-1.0, 0.0, g)
        assert w.singular and np.all(np.isfinite(w.mass))
        avgs.append(w.mass[DyadicCube(3, 0).cells(g)].sum() * 8)
    assert np.all(np.diff(avgs) > 0)
    # excised mass: int_{h/2}^{1/8} dx/x = log(2^{L-2}), so the average grows by 8 log 2 per level
    assert np.allclose(np.diff(avgs), 8 * math.log(2))


def test_masses_are_additive():
    g = DyadicGrid(9)
    w = power_weight(-0.6, 0.5, g)
    for lev in range(g.depth + 1):
        assert w.level_mass(lev).sum() == pytest.approx(w.total(), rel=1e-12)
    # total mass against the closed form of int_0^1 |x - 1/2|^{-0.6}
    assert w.total() == pytest.approx(2 * 0.5 ** 0.4 / 0.4, rel=1e-12)


def _brute_ap(w, p):
    g = w.grid
    d = w.density
    best = 0.0
    for lev in range(g.depth + 1):
        for j in range(1 << lev):
            c = DyadicCube(lev, j).cells(g)
            best = max(best, w.mass[c].sum() / (c.size * g.cell_width)
                       * np.mean(d[c] ** (-1 / (p - 1))) ** (p - 1))
    return best


def test_ap_examples():
    g = DyadicGrid(12)
    assert ap_constant(lebesgue(g), 3.0) == 1.0
    assert ap_constant(power_weight(0.5, 0.0, g), 2.0) == pytest.approx(4 / 3, rel=0.02)
    assert ap_constant(power_weight(3.0, 0.0, g), 2.0) == INF


def test_ap_matches_brute_force_on_piecewise_weight():
    g = DyadicGrid(6)
    w = random_log_weight(g, 3, 1.0)
    assert ap_constant(w, 2.5) == pytest.approx(_brute_ap(w, 2.5), rel=1e-12)


@given(st.integers(0, 2 ** 32), st.floats(1.2, 5))
def test_ap_at_least_one(seed, p):
    g = DyadicGrid(6)
    w = random_log_weight(g, seed, 0.8)
    assert ap_constant(w, p) >= 1 - 1e-12
    assert ap_constant(piecewise_weight(g, np.full(g.n_cells, 3.0)), p) == pytest.approx(1.0)


def test_ainfty_examples():
    g = DyadicGrid(12)
    assert ainfty_constant(lebesgue(g)) == pytest.approx(1.0)
    w = power_weight(0.5, 0.0, g)
    a12 = ainfty_constant(w)
    a10 = ainfty_constant(power_weight(0.5, 0.0, DyadicGrid(10)))
    assert math.isfinite(a12) and abs(a12 - a10) <= 0.05 * a10
    assert ainfty_constant(w * 2.0) == pytest.approx(a12, rel=1e-13)
    with pytest.raises(SingularWeightError, match="A_"):
        ainfty_constant(power_weight(-1.5, 0.0, g))
    assert math.isfinite(ainfty_constant(power_weight(-1.5, 0.0, g), allow_truncated=True))


def test_ainfty_matches_brute_force():
    g = DyadicGrid(5)
    w = random_log_weight(g, 11, 1.5)
    d = w.density
    best = 0.0
    for lev in range(g.depth + 1):
        for j in range(1 << lev):
            q = DyadicCube(lev, j)
            tot = 0.0
            for cell in q.cells(g):
                tot += max(d[DyadicCube(m, cell >> (g.depth - m)).cells(g)].mean()
                           for m in range(lev, g.depth + 1)) * g.cell_width
            best = max(best, tot / w.mass[q.cells(g)].sum())
    assert ainfty_constant(w) == pytest.approx(best, rel=1e-12)


def test_multi_ap_examples():
    g = DyadicGrid(10)
    assert multi_ap_constant(WeightTuple((lebesgue(g), lebesgue(g)), (2, 3))) == pytest.approx(1.0)
    vals = []
    for L in (8, 10, 12):
        gl = DyadicGrid(L)
        tup = WeightTuple((power_weight(-2.0, 0.0, gl), power_weight(2.0, 0.0, gl)), (2.0, 4.0))
        prod = tup.product()
        assert prod.law.terms == ((0.0, pytest.approx(-2 / 3)),)
        vals.append(multi_ap_constant(tup))
    assert all(math.isfinite(v) for v in vals)
    assert vals[2] <= 1.25 * vals[1] and vals[1] <= 1.25 * vals[0]


def test_multi_ap_matches_brute_force():
    g = DyadicGrid(10)
    w = power_weight(0.5, 0.0, g)
    tup = WeightTuple((w, w), (2.0, 2.0))
    up, down = _closed_form_masses(g, 0.5, 0.0), _closed_form_masses(g, -0.5, 0.0)
    best = 0.0
    for lev in range(g.depth + 1):
        # p = 1, p_i' = 2: <w^{1/2} w^{1/2}>_Q <w^{-1}>_Q^{1/2} <w^{-1}>_Q^{1/2}
        m = 2.0 ** -lev
        val = up.reshape(1 << lev, -1).sum(axis=1) / m * down.reshape(1 << lev, -1).sum(axis=1) / m
        best = max(best, val.max())
    assert multi_ap_constant(tup) == pytest.approx(best, rel=1e-9)


def test_factorization_agrees_on_examples():
    g = DyadicGrid(10)
    good = WeightTuple((power_weight(-2.0, 0.0, g), power_weight(2.0, 0.0, g)), (2.0, 4.0))
    rep = factorization_check(good)
    assert rep.consistent and rep.all_finite
    bad = WeightTuple((power_weight(3.0, 0.0, g), lebesgue(g)), (2.0, 2.0))
    rep = factorization_check(bad)
    assert rep.consistent and not rep.all_finite and rep.multi == INF


def test_rhi_examples():
    g = DyadicGrid(10)
    one = lebesgue(g)
    assert rhi_constant([one, one], (0.3, 2.0)) == pytest.approx(1.0)
    assert converse_rhi_constant([one, one], (0.3, 2.0)) == pytest.approx(1.0)
    x = power_weight(1.0, 0.0, g)
    assert rhi_constant([x, x], (0.5, 0.5)) == pytest.approx(1.0, rel=1e-12)
    vals = {}
    for L in (10, 12):
        gl = DyadicGrid(L)
        ws = [power_weight(1.0, 0.0, gl), power_weight(-0.5, 0.0, gl)]
        vals[L] = (rhi_constant(ws, (1, 1)), converse_rhi_constant(ws, (1, 1)))
    for a, b in zip(vals[10], vals[12]):
        assert math.isfinite(b) and b < 1.05 * a


@given(st.integers(0, 2 ** 32), st.floats(0.1, 3), st.floats(0.1, 3))
def test_rhi_scale_invariant(seed, c, t):
    g = DyadicGrid(6)
    ws = [random_log_weight(g, seed, 1.0), power_weight(0.5, 0.25, g)]
    ts = (t, 0.7)
    scaled = [ws[0] * c, ws[1]]
    assert rhi_constant(scaled, ts) == pytest.approx(rhi_constant(ws, ts), rel=1e-10)
    assert converse_rhi_constant(scaled, ts) == pytest.approx(converse_rhi_constant(ws, ts), rel=1e-10)


@given(st.integers(0, 2 ** 32), st.lists(st.floats(0.01, 1), min_size=2, max_size=3))
def test_holder_direction(seed, raw):
    g = DyadicGrid(7)
    t = np.array(raw) / (sum(raw) * 1.0001)
    ws = [random_log_weight(g, seed + k, 1.5) for k in range(len(t))]
    prod = combine(list(zip(ws, t)))
    for lev in range(g.depth + 1):
        rhs = np.prod([w.level_avg(lev) ** ti for w, ti in zip(ws, t)], axis=0)
        assert np.all(prod.level_avg(lev) <= rhs * (1 + 1e-12))


def test_bloom_nu_examples():
    g = DyadicGrid(8)
    w = power_weight(0.7, 0.0, g)
    assert np.allclose(bloom_nu(BloomPair(0, w, w, 2.0)).density, 1.0)
    assert np.allclose(bloom_nu(BloomPair(0, w, lebesgue(g), 2.0, theta=0.0)).density, 1.0)
    nu = bloom_nu(BloomPair(0, power_weight(-2.0, 0.0, g), lebesgue(g), 2.0))
    assert nu.singular and nu.law.terms == ((0.0, -1.0),)
    # away from the singular cell the masses are those of |x|^-1
    assert np.allclose(nu.mass[1:], np.log(np.arange(2, g.n_cells + 1) / np.arange(1, g.n_cells)))


def test_combine_matches_density_route_for_piecewise_weights():
    g = DyadicGrid(6)
    a, b = random_log_weight(g, 1), random_log_weight(g, 2)
    c = combine([(a, 0.3), (b, -1.2)], coef=2.0)
    assert np.allclose(c.density, 2.0 * a.density ** 0.3 * b.density ** -1.2)
