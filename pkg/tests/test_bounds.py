import numpy as np
import pytest
from hypothesis import given, strategies as st

from dyadiclab.bounds import (fs_check, lms_bound_check, maximal_weight, weighted_fs_check,
                              weighted_sparse_norm_check)
from dyadiclab.grid import ROOT, DyadicCube, DyadicGrid, lp_norm
from dyadiclab.probes import KINDS, random_input, trial_rng
from dyadiclab.sparse import SparseFamily, random_sparse_family
from dyadiclab.weights import WeightTuple, lebesgue, power_weight, random_log_weight


def test_trial_rng_is_deterministic_and_independent():
    a = trial_rng(7, 3).random(4)
    assert np.array_equal(a, trial_rng(7, 3).random(4))
    assert not np.array_equal(a, trial_rng(7, 4).random(4))
    assert not np.array_equal(a, trial_rng(8, 3).random(4))


@given(st.integers(0, 2 ** 32), st.sampled_from(KINDS))
def test_random_input_kinds(seed, kind):
    g = DyadicGrid(7)
    w = power_weight(0.5, 0.0, g)
    f = random_input(g, np.random.default_rng(seed), kind, dual=w)
    assert f.shape == (g.n_cells,) and np.all(np.isfinite(f))
    if kind == "indicator":
        assert set(np.unique(f)) <= {0.0, 1.0} and f.sum() > 0


def test_random_input_errors():
    g = DyadicGrid(4)
    with pytest.raises(ValueError):
        random_input(g, np.random.default_rng(0), "dual")
    with pytest.raises(ValueError):
        random_input(g, np.random.default_rng(0), "nope")


def test_maximal_weight_dominates():
    g = DyadicGrid(8)
    w = random_log_weight(g, 2, 1.5)
    assert np.all(maximal_weight(w, 1.5).density >= w.density * (1 - 1e-12))


def test_fs_unweighted_single_cube():
    # w = 1 and S = {[0,1)}: ||<|f|>||_2 <= ||f||_2, so the ratio is at most 1 / (p' r'^(1/p'))
    g = DyadicGrid(6)
    S = SparseFamily(g, frozenset([ROOT]))
    f = np.random.default_rng(1).normal(size=g.n_cells)
    p, r = 2.0, 1.25
    c = 2.0 * 5.0 ** 0.5
    expect = np.abs(f).mean() / (c * lp_norm(f, None, 2.0, g))
    assert fs_check(S, f, lebesgue(g), p, r) == pytest.approx(expect, rel=1e-12)
    # the sigma-weighted operator averages f itself
    signed = abs(f.mean()) / (c * lp_norm(f, None, 2.0, g))
    assert weighted_fs_check(S, f, lebesgue(g), lebesgue(g), p, r) == pytest.approx(signed, rel=1e-12)
    assert fs_check(S, np.zeros(g.n_cells), lebesgue(g), p, r) == 0.0
    with pytest.raises(ValueError):
        fs_check(S, f, lebesgue(g), 1.0, r)


@given(st.integers(0, 2 ** 32))
def test_fs_bounded_for_arbitrary_weights(seed):
    g = DyadicGrid(8)
    rng = np.random.default_rng(seed)
    S = random_sparse_family(g, 30, seed, include_root=True)
    w = random_log_weight(g, seed, 2.0)
    sigma = random_log_weight(g, seed + 1, 1.0)
    f = np.abs(random_input(g, rng))
    assert fs_check(S, f, w, 2.0, 1.25) <= 2.0
    assert weighted_fs_check(S, f, w, sigma, 2.0, 1.25) <= 2.0


def test_weighted_sparse_norm_check():
    g = DyadicGrid(7)
    S = SparseFamily(g, frozenset([ROOT]))
    chk = weighted_sparse_norm_check(S, lebesgue(g), 2.0, trials=20)
    assert chk.ratio <= 1 + 1e-12 and chk.reference == pytest.approx(1.0) and chk.trials == 20
    with pytest.raises(ValueError):
        weighted_sparse_norm_check(S, lebesgue(g), 1.0)


def test_lms_bound():
    g = DyadicGrid(7)
    S = random_sparse_family(g, 20, 3, include_root=True)
    tup = WeightTuple((power_weight(0.5, 0.0, g), lebesgue(g)), (2.0, 2.0))
    rep = lms_bound_check(S, tup, trials=30)
    assert rep.sum_ratio is not None and rep.power == 2.0
    assert 0 < rep.ratio <= rep.sum_ratio * (1 + 1e-12)
    bad = WeightTuple((power_weight(3.0, 0.0, g), lebesgue(g)), (2.0, 2.0))
    with pytest.raises(ValueError):
        lms_bound_check(S, bad)
