import numpy as np
import pytest
from hypothesis import given, strategies as st

from dyadiclab.czo import (BudgetError, CommutatorSpec, KernelSpec, apply_operator,
                           apply_operator_dense, binomial_commutator, commutator, iterated_commutator,
                           kernel_size_constant, nondegenerate_partner)
from dyadiclab.grid import DyadicCube, DyadicGrid, GridFunction

families = st.sampled_from(["positive", "odd"])


@given(st.integers(0, 2 ** 32), families, st.sampled_from([(1, 7), (2, 6), (3, 4)]), st.floats(0.1, 2))
def test_fast_matches_dense(seed, fam, shape, eps):
    n, depth = shape
    g = DyadicGrid(depth)
    rng = np.random.default_rng(seed)
    fs = [rng.normal(size=g.n_cells) for _ in range(n)]
    K = KernelSpec(n=n, family=fam, eps=eps)
    fast = apply_operator(K, fs, g).values
    dense = apply_operator_dense(K, fs, g).values
    assert np.allclose(fast, dense, rtol=1e-9, atol=1e-9 * np.abs(dense).max())
    rows = np.array([0, 3, g.n_cells - 1])
    part = apply_operator(K, fs, g, rows).values
    assert np.allclose(part[rows], fast[rows])


@given(st.integers(0, 2 ** 32), st.floats(-3, 3))
def test_multilinear(seed, c):
    g = DyadicGrid(6)
    rng = np.random.default_rng(seed)
    f, f2, h = (rng.normal(size=g.n_cells) for _ in range(3))
    K = KernelSpec()
    lhs = apply_operator(K, [f + c * f2, h], g).values
    rhs = apply_operator(K, [f, h], g).values + c * apply_operator(K, [f2, h], g).values
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))


def test_kernel_spec_validation():
    for bad in (dict(n=0), dict(family="x"), dict(eps=0), dict(delta=1.5), dict(sign=2)):
        with pytest.raises(ValueError):
            KernelSpec(**bad)
    with pytest.raises(ValueError):
        apply_operator(KernelSpec(n=2), [np.ones(8)], DyadicGrid(3))


def test_budget():
    g = DyadicGrid(11)
    with pytest.raises(BudgetError):
        apply_operator(KernelSpec(n=2), [np.ones(g.n_cells)] * 2, g)
    with pytest.raises(BudgetError):
        apply_operator_dense(KernelSpec(n=2), [np.ones(1 << 9)] * 2, DyadicGrid(9))


def test_size_constant():
    for fam in ("positive", "odd"):
        assert 0 < kernel_size_constant(KernelSpec(family=fam)) <= 1.0


def test_partner():
    g = DyadicGrid(8)
    K = KernelSpec()
    p = nondegenerate_partner(DyadicCube(4, 0), K, g)
    assert p.side == "right" and p.cube == DyadicCube(4, 4) and p.c > 0
    # odd kernel: x to the right of y gives a positive value
    assert p.sign == 1
    q = nondegenerate_partner(DyadicCube(4, 15), K, g)
    assert q.side == "left" and q.cube == DyadicCube(4, 11) and q.sign == -1
    with pytest.raises(ValueError):
        nondegenerate_partner(DyadicCube(4, 15), K, g, allow_left=False)
    with pytest.raises(ValueError):
        nondegenerate_partner(DyadicCube(9, 0), K, g)


def test_partner_lower_bound_holds():
    g = DyadicGrid(7)
    K = KernelSpec(family="positive", eps=0.5)
    Q = DyadicCube(3, 1)
    p = nondegenerate_partner(Q, K, g)
    x = g.midpoints()
    vals = K.value(x[p.cube.cells(g)][:, None], [x[Q.cells(g)][None, :]] * 2, g.cell_width)
    assert np.all(p.sign * vals >= p.c / Q.measure ** 2 * (1 - 1e-12))


def test_constant_symbol_gives_zero():
    g = DyadicGrid(6)
    rng = np.random.default_rng(0)
    fs = [rng.normal(size=g.n_cells) for _ in range(2)]
    out = commutator(KernelSpec(), GridFunction.constant(g, 2.5), 1, fs, g).values
    assert np.abs(out).max() < 1e-10 * np.abs(apply_operator(KernelSpec(), fs, g).values).max()


@given(st.integers(0, 2 ** 32), st.integers(1, 3), st.integers(0, 1))
def test_binomial_matches_iterated(seed, k, slot):
    g = DyadicGrid(6)
    rng = np.random.default_rng(seed)
    fs = [rng.normal(size=g.n_cells) for _ in range(2)]
    b = rng.normal(size=g.n_cells)
    K = KernelSpec()
    it = iterated_commutator(K, CommutatorSpec((slot,), ((b,) * k,)), fs, g).values
    bi = binomial_commutator(K, b, k, slot, fs, g).values
    assert np.allclose(it, bi, atol=1e-8 * (1 + np.abs(bi).max()))


def test_iterated_two_slots_by_hand():
    g = DyadicGrid(6)
    rng = np.random.default_rng(3)
    f1, f2, b1, b2 = (rng.normal(size=g.n_cells) for _ in range(4))
    K = KernelSpec()

    def T(a, c):
        return apply_operator(K, [a, c], g).values

    # [b1, [b2, T]_2]_1
    inner = lambda a, c: b2 * T(a, c) - T(a, b2 * c)
    expect = b1 * inner(f1, f2) - inner(b1 * f1, f2)
    got = iterated_commutator(K, CommutatorSpec((0, 1), ((b1,), (b2,))), [f1, f2], g).values
    assert np.allclose(got, expect)
    # commutators in different slots commute
    swapped = iterated_commutator(K, CommutatorSpec((1, 0), ((b2,), (b1,))), [f1, f2], g).values
    assert np.allclose(got, swapped)


def test_commutator_spec_validation():
    b = np.ones(4)
    with pytest.raises(ValueError):
        CommutatorSpec((0, 0), ((b,), (b,)))
    with pytest.raises(ValueError):
        CommutatorSpec((0,), ((),))
    with pytest.raises(ValueError):
        CommutatorSpec((0,), ((b, b),), ((0.5, 0.6),))
    s = CommutatorSpec((0, 1), ((b, b), (b,)))
    assert s.orders == (2, 1) and s.total_order == 3 and s.thetas == ((0.5, 0.5), (1.0,))
    assert s.reordered([1, 0]).slots == (1, 0)


@given(st.integers(0, 2 ** 32), st.floats(-3, 3))
def test_commutator_linear_in_symbol(seed, c):
    g = DyadicGrid(6)
    rng = np.random.default_rng(seed)
    fs = [rng.normal(size=g.n_cells) for _ in range(2)]
    b1, b2 = rng.normal(size=g.n_cells), rng.normal(size=g.n_cells)
    K = KernelSpec()
    lhs = commutator(K, b1 + c * b2, 0, fs, g).values
    rhs = commutator(K, b1, 0, fs, g).values + c * commutator(K, b2, 0, fs, g).values
    assert np.allclose(lhs, rhs, atol=1e-9 * (1 + np.abs(rhs).max()))
