from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps
from scipy.special import kolmogorov

from derecsim.errors import EmptySample
from derecsim.stats import EmpiricalDist, kolmogorov_sf, ks_two_sample, wasserstein_1d

from oracles import lattice_ks_pvalue, permutation_ks_pvalue, transport_lp, w1


def test_identical_samples_give_p_one():
    r = ks_two_sample([1, 2, 3], [3, 2, 1])
    assert r.statistic == 0.0
    assert r.pvalue == 1.0


def test_single_points():
    assert ks_two_sample([0.0], [0.0]).pvalue == 1.0
    r = ks_two_sample([0.0], [1.0])
    assert r.statistic == 1.0
    assert r.pvalue == 1.0


def test_disjoint_samples():
    r = ks_two_sample([1, 2, 3], [4, 5, 6])
    assert r.statistic == 1.0
    # only the two fully separated arrangements reach D = 1
    assert r.pvalue == pytest.approx(2 / math.comb(6, 3), abs=1e-15)


def test_tied_example_against_permutations():
    x, y = [1, 2, 3, 4], [1, 2, 3, 4, 5, 6, 7, 8]
    r = ks_two_sample(x, y)
    assert r.statistic == 0.5
    assert r.pvalue == pytest.approx(permutation_ks_pvalue(x, y), abs=1e-12)


def test_symmetric_in_argument_order():
    rng = np.random.default_rng(3)
    x, y = rng.integers(0, 5, 7), rng.integers(0, 5, 11)
    assert ks_two_sample(x, y) == ks_two_sample(y, x)


def test_empty_sample():
    with pytest.raises(EmptySample):
        ks_two_sample([], [1.0])


def test_non_finite_sample():
    with pytest.raises(ValueError):
        ks_two_sample([1.0, math.nan], [1.0])


@pytest.mark.parametrize("lam", [0.05, 0.3, 0.7, 0.99, 1.0, 1.01, 1.5, 2.5, 4.0])
def test_kolmogorov_tail_against_scipy(lam):
    assert kolmogorov_sf(lam) == pytest.approx(float(kolmogorov(lam)), abs=1e-12)


def test_large_samples_use_the_asymptotic_tail():
    rng = np.random.default_rng(8)
    x, y = rng.normal(size=400), rng.normal(0.1, 1, size=400)
    r = ks_two_sample(x, y)
    ref = sps.ks_2samp(x, y, method="asymp")
    assert r.statistic == pytest.approx(ref.statistic, abs=1e-15)
    lam = math.sqrt(400 * 400 / 800) * r.statistic
    assert r.pvalue == pytest.approx(float(kolmogorov(lam)), abs=1e-12)


def test_continuous_data_matches_scipy_exact():
    rng = np.random.default_rng(1)
    for m, n in [(5, 7), (20, 20), (33, 50), (120, 90)]:
        x, y = rng.normal(size=m), rng.normal(0.3, 1, size=n)
        ref = sps.ks_2samp(x, y, method="exact")
        assert ks_two_sample(x, y).pvalue == pytest.approx(ref.pvalue, abs=1e-10)


small = st.lists(st.integers(0, 3), min_size=1, max_size=5)


@settings(max_examples=150, deadline=None)
@given(small, small)
def test_exact_pvalue_equals_permutation_enumeration(x, y):
    assert ks_two_sample(x, y).pvalue == pytest.approx(permutation_ks_pvalue(x, y), abs=1e-12)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(0, 6), min_size=1, max_size=25), st.lists(st.integers(0, 6), min_size=1, max_size=25))
def test_exact_pvalue_equals_integer_path_count(x, y):
    assert ks_two_sample(x, y).pvalue == pytest.approx(lattice_ks_pvalue(x, y), abs=1e-12)


def test_empirical_dist_validation():
    with pytest.raises(ValueError):
        EmpiricalDist(np.array([1.0, 1.0]), np.array([0.5, 0.5]))
    with pytest.raises(ValueError):
        EmpiricalDist(np.array([1.0, 2.0]), np.array([0.5, 0.6]))
    d = EmpiricalDist.from_samples([3, 1, 1, 2])
    assert d.support.tolist() == [1.0, 2.0, 3.0]
    assert d.weights.tolist() == [0.5, 0.25, 0.25]
    with pytest.raises(ValueError):
        d.weights[0] = 1.0


def test_wasserstein_point_masses():
    p = EmpiricalDist.from_samples([0.0])
    q = EmpiricalDist.from_samples([2.5])
    assert wasserstein_1d(p, q) == 2.5
    assert wasserstein_1d(p, p) == 0.0


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=30),
    st.lists(st.floats(-50, 50, allow_nan=False), min_size=1, max_size=30),
)
def test_wasserstein_matches_scipy(u, v):
    got = wasserstein_1d(EmpiricalDist.from_samples(u), EmpiricalDist.from_samples(v))
    assert got == pytest.approx(w1(u, v), abs=1e-9)
    assert got == pytest.approx(
        wasserstein_1d(EmpiricalDist.from_samples(v), EmpiricalDist.from_samples(u)), abs=1e-12
    )


def test_wasserstein_matches_transport_lp():
    rng = np.random.default_rng(11)
    for _ in range(20):
        xs = np.sort(rng.choice(np.arange(-10, 10), size=4, replace=False)).astype(float)
        ys = np.sort(rng.choice(np.arange(-10, 10), size=3, replace=False)).astype(float)
        p, q = rng.dirichlet(np.ones(4)), rng.dirichlet(np.ones(3))
        got = wasserstein_1d(EmpiricalDist.from_weights(xs, p), EmpiricalDist.from_weights(ys, q))
        assert got == pytest.approx(transport_lp(xs, p, ys, q), abs=1e-9)
