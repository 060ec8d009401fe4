import math
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dyadiclab.grid import (ROOT, DegenerateMeasureError, DyadicCube, DyadicGrid, GridError, GridFunction,
                            cube_average, dyadic_maximal, lp_norm, median, weak_lp_norm)
from dyadiclab.weights import power_weight

values = st.lists(st.floats(-5, 5, allow_nan=False), min_size=16, max_size=16)


def test_cells_partition_the_unit_interval():
    g = DyadicGrid(5)
    assert g.n_cells == 32 and g.cell_width == 2 ** -5
    for lev in range(6):
        seen = np.concatenate([q.cells(g) for q in g.cubes(lev)])
        assert sorted(seen) == list(range(32))


def test_cube_tree_relations():
    q = DyadicCube(3, 5)
    assert q.interval() == (5 / 8, 6 / 8)
    assert q.measure == 1 / 8
    assert q.parent() == DyadicCube(2, 2)
    assert all(c.parent() == q for c in q.children())
    assert q.ancestor(0) == ROOT and ROOT.contains(q) and not q.contains(ROOT)
    with pytest.raises(Exception):
        DyadicCube(2, 4)


def test_shifted_grid_is_a_rotation():
    g = DyadicGrid(6)
    s = g.with_shift(1 / 3)
    cells = DyadicCube(1, 0).cells(s)
    assert cells.size == 32
    assert cells[0] == g.n_cells // 3


def test_gridfunction_rejects_non_finite_unless_flagged():
    g = DyadicGrid(2)
    with pytest.raises(GridError):
        GridFunction(np.array([1.0, np.inf, 0, 0]), g)
    GridFunction(np.array([1.0, np.inf, 0, 0]), g, may_diverge=True)


def test_cube_average_examples():
    g = DyadicGrid(6)
    f = GridFunction.indicator(g, 0, 0.5)
    assert cube_average(GridFunction.constant(g, 3.0), DyadicCube(2, 1), g) == 3.0
    assert cube_average(f, ROOT, g) == 0.5
    # int_0^{1/2} x dx / int_0^1 x dx = (1/8) / (1/2)
    assert cube_average(f, ROOT, g, power_weight(1.0, 0.0, g)) == pytest.approx(0.25, rel=1e-14)


def test_cube_average_degenerate_measure():
    g = DyadicGrid(3)
    w = SimpleNamespace(mass=np.r_[np.zeros(4), np.ones(4)] * g.cell_width)
    with pytest.raises(DegenerateMeasureError, match="degenerate measure on cube"):
        cube_average(GridFunction.constant(g, 1.0), DyadicCube(1, 0), g, w)


def test_norm_examples():
    g = DyadicGrid(14)
    one = GridFunction.constant(g, 1.0)
    assert lp_norm(one, None, 2) == pytest.approx(1.0)
    w = power_weight(0.5, 0.0, g)
    assert weak_lp_norm(one, w, 3) == pytest.approx(w.total() ** (1 / 3))
    f = GridFunction.from_callable(g, lambda x: x ** -0.25)
    assert lp_norm(f, None, 2) == pytest.approx(math.sqrt(2), rel=0.02)
    assert lp_norm(GridFunction.constant(g, 0.0), w, 2) == 0.0
    assert weak_lp_norm(GridFunction.constant(g, 0.0), w, 2) == 0.0


def _brute_weak(a, mass, p):
    best = 0.0
    for t in np.unique(a):
        if t > 0:
            best = max(best, t * mass[a >= t].sum() ** (1 / p))
    return best


@given(values, st.floats(0.5, 4))
def test_weak_norm_matches_level_set_oracle_and_strong_bound(vals, p):
    g = DyadicGrid(4)
    f = GridFunction(np.array(vals), g)
    w = power_weight(-0.5, 0.25, g)
    a = np.abs(f.values)
    assert weak_lp_norm(f, w, p) == pytest.approx(_brute_weak(a, w.mass, p), rel=1e-12, abs=1e-300)
    assert weak_lp_norm(f, w, p) <= lp_norm(f, w, p) * (1 + 1e-12)


def test_maximal_examples():
    g = DyadicGrid(6)
    assert np.allclose(dyadic_maximal(GridFunction.constant(g, 1.0)).values, 1.0)
    f = GridFunction.indicator(g, 0, 0.25)
    cell = DyadicCube(2, 1).cells(g)
    assert np.allclose(dyadic_maximal(f).values[cell], 0.5)
    assert np.allclose(dyadic_maximal(f, r=2).values[cell], math.sqrt(0.5))


@given(values, st.sampled_from([1.0, 1.5, 3.0]))
def test_maximal_equals_brute_force(vals, r):
    g = DyadicGrid(4)
    f = GridFunction(np.array(vals), g)
    sigma = power_weight(0.7, 0.375, g)
    out = dyadic_maximal(f, g, sigma, r).values
    for cell in range(g.n_cells):
        best = 0.0
        for lev in range(g.depth + 1):
            q = DyadicCube(lev, cell >> (g.depth - lev))
            c = q.cells(g)
            m = sigma.mass[c]
            best = max(best, ((np.abs(f.values[c]) ** r * m).sum() / m.sum()) ** (1 / r))
        assert out[cell] == pytest.approx(best, rel=1e-12)


def test_median_examples():
    g = DyadicGrid(5)
    assert median(GridFunction.constant(g, 2.5), ROOT) == 2.5
    assert median(GridFunction.indicator(g, 0, 0.5), ROOT) == 0.0


@given(values, st.integers(0, 4), st.integers(0, 15))
def test_median_inequalities(vals, lev, j):
    g = DyadicGrid(4)
    b = GridFunction(np.array(vals), g)
    q = DyadicCube(lev, j % (1 << lev))
    a = median(b, q)
    x = b.restrict(q)
    assert (x >= a).sum() * 2 >= x.size
    assert (x <= a).sum() * 2 >= x.size


@given(values, st.integers(0, 4), st.integers(0, 15))
def test_average_between_min_and_max(vals, lev, j):
    g = DyadicGrid(4)
    f = GridFunction(np.array(vals), g)
    q = DyadicCube(lev, j % (1 << lev))
    for mu in (None, power_weight(-0.7, 0.0, g), power_weight(2.0, 0.625, g)):
        avg = cube_average(f, q, g, mu)
        x = f.restrict(q)
        assert x.min() - 1e-12 <= avg <= x.max() + 1e-12
