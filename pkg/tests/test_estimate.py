import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rcar.dist import DiscreteJoint, IndependentProduct, Normal, PointMass, Uniform
from rcar.errors import AllInvalidError, ZeroVarianceError
from rcar.estimate import (bandwidth_default, bandwidth_ladder, bandwidth_rule, bin_successors,
                           conditional_cf_estimate, conditional_cf_ladder, default_x_probe,
                           empirical_cf, fixed_bandwidth_limit, joint_cf_from_transition,
                           recover_eps_cf, recover_rho_cf, transition_cdf_estimate,
                           transition_cdf_ladder)
from rcar.process import simulate

from conftest import unif_normal, unif_unif


@pytest.fixture(scope="module")
def long_path():
    return simulate(unif_normal(), 0.0, 10 ** 6, retain_driving=False,
                    rng=np.random.default_rng(31))


# --------------------------------------------------------------------------
# bins
# --------------------------------------------------------------------------


def test_bin_is_half_open():
    path = np.array([0.0, 0.5, 1.0, 0.5, 2.0])
    # X_j in (0, 0.5] for j < 4: j = 1 and 3; successors 1.0 and 2.0
    assert bin_successors(path, 0.0, 0.5).tolist() == [1.0, 2.0]
    # the final state never starts a step
    assert bin_successors(path, 1.5, 1.0).tolist() == []


def test_bin_rejects_bad_h():
    with pytest.raises(ValueError):
        bin_successors(np.zeros(3), 0.0, 0.0)


# --------------------------------------------------------------------------
# transition CDF
# --------------------------------------------------------------------------


def test_cdf_all_zero_path():
    path = np.zeros(4)
    est = transition_cdf_estimate(path, -0.5, 1.0, [-0.5, 0.0])
    assert est.values.tolist() == [0.0, 1.0] and est.bin_count == 3


def test_cdf_empty_bin():
    est = transition_cdf_estimate(np.zeros(4), 10.0, 1.0, [0.0, 1.0])
    assert est.empty_bin and est.bin_count == 0 and est.values.tolist() == [0.0, 0.0]


def test_cdf_unif_normal_matches_normal(long_path):
    h = (10 ** 6) ** -0.2
    ys = np.linspace(-4, 4, 201)
    est = transition_cdf_estimate(long_path, 0.0, h, ys)
    assert np.max(np.abs(est.values - stats.norm.cdf(ys))) < 0.02


def test_cdf_ladder(long_path):
    ests = transition_cdf_ladder(long_path, 0.0, 0.2, 3, [0.0])
    assert [e.h for e in ests] == [0.2, 0.1, 0.05]
    counts = [e.bin_count for e in ests]
    assert counts == sorted(counts, reverse=True)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32), x=st.floats(-2, 2), h=st.floats(0.01, 2.0),
       ys=st.lists(st.floats(-10, 10), min_size=1, max_size=30))
def test_cdf_invariants(seed, x, h, ys):
    path = simulate(unif_unif(), 0.0, 2000, retain_driving=False,
                    rng=np.random.default_rng(seed))
    ys = np.sort(np.array(ys))
    est = transition_cdf_estimate(path, x, h, ys)
    assert np.all(np.diff(est.values) >= 0)
    assert np.all((est.values >= 0) & (est.values <= 1))
    if not est.empty_bin:
        k = est.values * est.bin_count
        assert np.allclose(k, np.round(k), atol=1e-9)


# --------------------------------------------------------------------------
# characteristic functions
# --------------------------------------------------------------------------


def sym_grid(tmax, half):
    """Grid whose negative half mirrors the positive half bit for bit."""
    a = np.linspace(0.0, tmax, half + 1)[1:]
    return np.concatenate((-a[::-1], [0.0], a))


def test_empirical_cf_exact_symmetry():
    s = np.random.default_rng(0).normal(size=1000)
    t = sym_grid(3.0, 30)
    v = empirical_cf(s, t)
    assert v[30] == 1 + 0j
    assert np.array_equal(v[::-1], np.conj(v))


def test_conditional_cf_constant_successors():
    # every step out of the bin lands at 2.5
    path = np.array([0.1, 2.5, 0.1, 2.5, 0.1, 2.5])
    t = np.array([-1.0, 0.0, 0.7, 3.0])
    est = conditional_cf_estimate(path, 0.0, 0.2, t)
    assert np.allclose(est.values, np.exp(2.5j * t), atol=1e-15)
    assert np.allclose(np.abs(est.values), 1.0, atol=1e-15)


def test_conditional_cf_unif_normal(long_path):
    t = np.linspace(-3, 3, 61)
    est = conditional_cf_estimate(long_path, 0.0, (10 ** 6) ** -0.2, t)
    assert np.max(np.abs(est.values - np.exp(-t ** 2 / 2))) < 0.05


def test_conditional_cf_empty_bin():
    est = conditional_cf_estimate(np.zeros(5), 3.0, 0.1, [0.0, 1.0])
    assert est.empty_bin and not est.valid.any()


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2 ** 32), x=st.floats(-1, 1), h=st.floats(0.05, 1.0),
       tmax=st.floats(0.1, 20))
def test_cf_invariants(seed, x, h, tmax):
    path = simulate(unif_normal(), 0.0, 3000, retain_driving=False,
                    rng=np.random.default_rng(seed))
    t = sym_grid(tmax, 20)
    est = conditional_cf_estimate(path, x, h, t)
    if est.empty_bin:
        return
    assert est.values[20] == 1 + 0j
    assert np.all(np.abs(est.values) <= 1 + 1e-12)
    assert np.array_equal(est.values[::-1], np.conj(est.values))


def test_recover_eps_point_mass():
    # eps = 2 fixed; start just inside (0, h] so step 0 is the only one in the bin
    law = IndependentProduct(Uniform(0.2, 0.8), PointMass(2.0))
    path = simulate(law, 1e-12, 50, retain_driving=False, rng=np.random.default_rng(0))
    t = np.linspace(-2, 2, 9)
    est = recover_eps_cf(path, 1e-9, t)
    assert est.bin_count == 1
    assert np.max(np.abs(est.values - np.exp(2j * t))) < 1e-11


def test_recover_eps_unif_normal(long_path):
    t = np.linspace(-3, 3, 61)
    est = recover_eps_cf(long_path, bandwidth_default(long_path), t)
    assert est.values[30] == 1
    assert np.max(np.abs(est.values - np.exp(-t ** 2 / 2))) < 0.05


def test_recover_rho_point_mass():
    # rho = 0.5 fixed, eps ~ N(0, 1): the ratio is e^{i 0.5 t} up to binning error
    law = IndependentProduct(PointMass(0.5), Normal(0.0, 1.0))
    path = simulate(law, 0.0, 10 ** 6, retain_driving=False, rng=np.random.default_rng(3))
    t = np.linspace(-2, 2, 21)
    est = recover_rho_cf(path, 0.05, 1.0, t)
    v = est.valid
    assert v.mean() >= 0.8
    assert np.max(np.abs(est.values[v] - np.exp(0.5j * t[v]))) < 0.1
    assert est.values[10] == 1 + 0j


def test_recover_rho_unif_normal(long_path):
    t = np.linspace(-2, 2, 41)
    est = recover_rho_cf(long_path, bandwidth_default(long_path), 1.0, t)
    oracle = Uniform(0.2, 0.8).cf(t)
    assert est.valid.mean() >= 0.8
    assert np.max(np.abs(est.values[est.valid] - oracle[est.valid])) < 0.1


def test_recover_rho_floor_invalidates():
    est = recover_rho_cf(np.random.default_rng(0).normal(size=20_000), 0.2, 1.0,
                         np.linspace(-8, 8, 33), floor=0.05)
    assert not est.valid.all() and est.valid.any()
    assert np.all(np.isnan(est.values[~est.valid]))


def test_recover_rho_all_invalid():
    with pytest.raises(AllInvalidError):
        recover_rho_cf(np.zeros(10), 0.1, 5.0, [1.0, 2.0])
    with pytest.raises(ValueError):
        recover_rho_cf(np.zeros(10), 0.1, 0.0, [1.0])


def test_joint_cf_at_x_zero_is_eps_cf(long_path):
    est = joint_cf_from_transition(long_path, 0.1, 0.0, 1.5)
    ref = conditional_cf_estimate(long_path, 0.0, 0.1, [1.5])
    assert est.x == 0.0 and est.value == ref.values[0]


def test_joint_cf_deterministic_pair():
    # X = 0, 1, 1.5, 1.75, ...; probe x = t1/t2 just below 1.5 so X_2 = 1.5 is the only
    # state in the bin and its successor is 0.5 * 1.5 + 1
    law = DiscreteJoint(((0.5, 1.0, 1.0),))
    path = simulate(law, 0.0, 60, retain_driving=False, rng=np.random.default_rng(0))
    t2 = 1.3
    t1 = (1.5 - 1e-10) * t2
    est = joint_cf_from_transition(path, 2e-10, t1, t2)
    assert est.bin_count == 1
    assert abs(est.value - np.exp(1j * (0.5 * t1 + t2))) < 1e-9


def test_joint_cf_unif_normal(long_path):
    est = joint_cf_from_transition(long_path, bandwidth_default(long_path), 1.0, 1.0)
    rng = np.random.default_rng(5)
    rho, eps = unif_normal().sample(rng, 10 ** 6)
    mc = np.mean(np.exp(1j * (rho + eps)))
    assert abs(est.value - mc) < 0.05


def test_joint_cf_requires_t2():
    with pytest.raises(ValueError):
        joint_cf_from_transition(np.zeros(4), 0.1, 1.0, 0.0)


# --------------------------------------------------------------------------
# bandwidth
# --------------------------------------------------------------------------


def test_bandwidth_constant_states():
    with pytest.raises(ZeroVarianceError):
        bandwidth_default(np.full(100, 3.0))


def test_bandwidth_formula():
    assert bandwidth_rule(10 ** 5, 1.0) == pytest.approx(0.106, abs=1e-15)
    assert bandwidth_rule(2 * 10 ** 5, 1.0) / bandwidth_rule(10 ** 5, 1.0) == pytest.approx(
        2 ** -0.2, rel=1e-14)
    assert 2 ** -0.2 == pytest.approx(0.8706, abs=1e-4)


def test_bandwidth_default_uses_sample_sd():
    s = np.random.default_rng(0).normal(size=1000)
    assert bandwidth_default(s) == pytest.approx(1.06 * s.std(ddof=1) * 1000 ** -0.2)


def test_bandwidth_ladder():
    assert bandwidth_ladder(0.4, 3).tolist() == [0.4, 0.2, 0.1]


def test_default_x_probe(long_path):
    xp = default_x_probe(long_path, 0.08)
    assert 0.5 < xp < 1.5
    with pytest.raises(ZeroVarianceError):
        default_x_probe(np.zeros(10))


def test_cf_ladder_lengths(long_path):
    ests = conditional_cf_ladder(long_path, 0.0, 0.2, 4, [0.0, 1.0])
    assert len(ests) == 4 and all(e.values[0] == 1 for e in ests)


# --------------------------------------------------------------------------
# fixed-bandwidth limit
# --------------------------------------------------------------------------


def test_fixed_bandwidth_limit_degenerate_rho():
    # with rho = 0, G(u, y) does not depend on u, so the limit is G(0, y)
    law = IndependentProduct(PointMass(0.0), Normal(0.0, 1.0))
    xs = np.random.default_rng(0).normal(size=10 ** 5)
    assert fixed_bandwidth_limit(law, 0.0, 0.5, 0.2, xs) == pytest.approx(
        stats.norm.cdf(0.5), abs=1e-12)


def test_fixed_bandwidth_limit_between_endpoints():
    law = unif_normal()
    xs = np.random.default_rng(0).normal(scale=1.18, size=10 ** 5)
    v = fixed_bandwidth_limit(law, 0.0, 0.5, 0.2, xs)
    from rcar.dist import oracle_transition_cdf
    lo, hi = oracle_transition_cdf(law, 0.2, 0.5), oracle_transition_cdf(law, 0.0, 0.5)
    assert lo < v < hi
