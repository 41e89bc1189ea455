import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from rcar.dist import (DiscreteJoint, FiniteDiscrete, IndependentProduct, LogNormalAbs,
                       Normal, PointMass, Uniform, ZeroInflatedRho, eps_scale, law_from_dict,
                       law_to_dict, log_moment_rho, log_plus_moment_eps, oracle_cf_eps,
                       oracle_cf_rho, oracle_joint_cf, oracle_transition_cdf,
                       oracle_transition_pdf, sample_pair)
from rcar.errors import ConfigError

from conftest import constant, unif_normal, unif_unif, zero_inflated

# Frozen oracles, computed outside the package.
# int_{0.2}^{0.8} log r dr / 0.6
UNIFORM_LOG_MOMENT = -0.7610454309409128
# 2 int_1^inf log x phi(x) dx
NORMAL_LOG_PLUS = 0.12205043635709784
# int Phi(1 - r) dr / 0.6 over U(0.2, 0.8), 40-point Gauss-Legendre
UNIF_NORMAL_G_1_1 = 0.6888543300524815


# --------------------------------------------------------------------------
# sampling
# --------------------------------------------------------------------------


def test_point_mass_joint_always_same_pair(rng):
    law = DiscreteJoint(((0.5, 1.0, 1.0),))
    rho, eps = law.sample(rng, 1000)
    assert np.all(rho == 0.5) and np.all(eps == 1.0)
    assert sample_pair(law, rng) == (0.5, 1.0)


def test_zero_inflated_alpha_one_forces_zero(rng):
    law = ZeroInflatedRho(1.0, Uniform(0.2, 0.8), PointMass(2.0))
    rho, eps = law.sample(rng, 1000)
    assert np.all(rho == 0.0) and np.all(eps == 2.0)


def test_uniform_rho_mean(rng):
    rho, _ = unif_normal().sample(rng, 10 ** 6)
    sd = 0.6 / math.sqrt(12)
    assert abs(rho.mean() - 0.5) < 3 * sd / 1e3


def test_zero_inflated_zero_is_exact(rng):
    rho, _ = zero_inflated(0.25).sample(rng, 200_000)
    frac = np.mean(rho == 0.0)
    assert abs(frac - 0.25) < 5 * math.sqrt(0.25 * 0.75 / 200_000)


def test_discrete_joint_keeps_dependence(rng):
    law = DiscreteJoint(((0.0, 1.0, 0.3), (0.5, -1.0, 0.7)))
    rho, eps = law.sample(rng, 10_000)
    assert set(zip(rho.tolist(), eps.tolist())) == {(0.0, 1.0), (0.5, -1.0)}


def test_lognormal_abs_sign(rng):
    m = LogNormalAbs(0.0, 1.0, 0.25)
    x = m.sample(rng, 100_000)
    assert abs(np.mean(x > 0) - 0.25) < 0.01
    assert isinstance(m.sample(rng), float)


# --------------------------------------------------------------------------
# log-moments
# --------------------------------------------------------------------------


def test_log_moment_point_mass():
    assert log_moment_rho(constant(0.5, 1.0)) == pytest.approx(math.log(0.5), abs=1e-15)


def test_log_moment_uniform_closed_form():
    a, b = 0.2, 0.8
    closed = ((b * math.log(b) - b) - (a * math.log(a) - a)) / (b - a)
    assert closed == pytest.approx(UNIFORM_LOG_MOMENT, abs=1e-15)
    assert log_moment_rho(unif_normal()) == pytest.approx(UNIFORM_LOG_MOMENT, abs=1e-9)


def test_log_moment_zero_inflated_is_minus_inf():
    assert log_moment_rho(zero_inflated(0.3)) == -math.inf


def test_log_moment_normal_rho():
    # E log|Z| = -(gamma + log 2) / 2
    law = IndependentProduct(Normal(0.0, 1.0), Normal(0.0, 1.0))
    assert log_moment_rho(law) == pytest.approx(-(np.euler_gamma + math.log(2)) / 2, abs=1e-8)


def test_log_plus_moment_bounded_eps():
    assert log_plus_moment_eps(unif_unif()) == 0.0


def test_log_plus_moment_point_e():
    assert log_plus_moment_eps(constant(0.5, math.e)) == pytest.approx(1.0, abs=1e-15)


def test_log_plus_moment_normal(rng):
    v = log_plus_moment_eps(unif_normal())
    assert v == pytest.approx(NORMAL_LOG_PLUS, abs=1e-8)
    z = np.abs(rng.normal(size=10 ** 6))
    mc = np.maximum(np.log(z), 0.0)
    assert abs(mc.mean() - v) < 4 * mc.std() / 1e3


def test_lognormal_log_moments_closed_form():
    law = IndependentProduct(LogNormalAbs(-1.0, 0.5, 0.5), LogNormalAbs(0.3, 1.0, 0.5))
    assert log_moment_rho(law) == pytest.approx(-1.0, abs=1e-9)
    # E (Y)^+ for Y ~ N(mu, s): mu Phi(mu/s) + s phi(mu/s)
    mu, s = 0.3, 1.0
    ref = mu * stats.norm.cdf(mu / s) + s * stats.norm.pdf(mu / s)
    assert log_plus_moment_eps(law) == pytest.approx(ref, abs=1e-8)


# --------------------------------------------------------------------------
# transition CDF and density
# --------------------------------------------------------------------------


def test_transition_cdf_at_zero_is_eps_cdf():
    assert oracle_transition_cdf(unif_normal(), 0.0, 0.0) == pytest.approx(0.5, abs=1e-15)


def test_transition_cdf_discrete_joint():
    law = DiscreteJoint(((0.5, 1.0, 0.5), (0.5, -1.0, 0.5)))
    assert oracle_transition_cdf(law, 2.0, 0.0) == 0.5


def test_transition_cdf_unif_normal_quadrature(rng):
    g = oracle_transition_cdf(unif_normal(), 1.0, 1.0)
    assert g == pytest.approx(UNIF_NORMAL_G_1_1, abs=1e-8)
    rho, eps = unif_normal().sample(rng, 10 ** 6)
    mc = np.mean(rho + eps <= 1.0)
    assert abs(mc - g) < 4 * math.sqrt(g * (1 - g) / 1e6)


def test_transition_cdf_negative_x():
    # rho x + eps <= y with x < 0 flips the direction in rho
    law = unif_normal()
    r = np.linspace(0.2, 0.8, 20001)
    ref = np.trapezoid(stats.norm.cdf(0.3 + 2.0 * r), r) / 0.6
    assert oracle_transition_cdf(law, -2.0, 0.3) == pytest.approx(ref, abs=1e-7)


def test_transition_cdf_zero_inflated_mixture():
    law = zero_inflated(0.25)
    inner = oracle_transition_cdf(unif_normal(), 1.0, 0.4)
    ref = 0.25 * stats.norm.cdf(0.4) + 0.75 * inner
    assert oracle_transition_cdf(law, 1.0, 0.4) == pytest.approx(ref, abs=1e-9)


def test_transition_pdf_integrates_to_cdf():
    law = unif_normal()
    ys = np.linspace(-8.0, 1.0, 4001)
    dens = oracle_transition_pdf(law, [1.0], ys)[0]
    assert np.trapezoid(dens, ys) == pytest.approx(oracle_transition_cdf(law, 1.0, 1.0), abs=1e-6)


def test_transition_pdf_uniform_eps_closed_form():
    law = unif_unif()
    ys = np.linspace(-2.0, 2.0, 81)
    dens = oracle_transition_pdf(law, [0.0, 1.5], ys)
    assert dens.shape == (2, 81)
    # x = 0: the eps density on [-1, 1)
    assert np.allclose(dens[0], np.where((ys >= -1) & (ys < 1), 0.5, 0.0), atol=1e-12)
    # x = 1.5: density of U(0.3, 1.2) + U(-1, 1) by numeric convolution
    u = np.linspace(0.3, 1.2, 20001)
    ref = [np.trapezoid((np.abs(ys_i - u) <= 1).astype(float), u) / 0.9 * 0.5 for ys_i in ys]
    assert np.allclose(dens[1], ref, atol=1e-4)


def test_transition_pdf_unavailable_for_discrete():
    assert oracle_transition_pdf(DiscreteJoint(((0.5, 1.0, 1.0),)), [0.0], [0.0]) is None


@settings(max_examples=25, deadline=None)
@given(x=st.floats(-5, 5), y1=st.floats(-6, 6), y2=st.floats(-6, 6))
def test_transition_cdf_monotone_in_y(x, y1, y2):
    lo, hi = sorted((y1, y2))
    law = unif_normal()
    a = oracle_transition_cdf(law, x, lo)
    b = oracle_transition_cdf(law, x, hi)
    assert 0.0 <= a <= b + 1e-12 <= 1.0 + 1e-12


# --------------------------------------------------------------------------
# characteristic functions
# --------------------------------------------------------------------------

MARGINALS = [Normal(0.3, 2.0), Uniform(-1.0, 3.0), PointMass(2.5),
             FiniteDiscrete((0.0, 1.0, -2.0), (0.2, 0.5, 0.3))]


@pytest.mark.parametrize("m", MARGINALS, ids=lambda m: type(m).__name__)
def test_cf_at_zero(m):
    assert complex(m.cf(0.0)) == 1 + 0j


def test_normal_cf_at_one():
    assert complex(oracle_cf_eps(unif_normal(), 1.0)) == pytest.approx(math.exp(-0.5), abs=1e-15)


def test_uniform_cf_at_pi(rng):
    closed = (np.exp(0.8j * np.pi) - np.exp(0.2j * np.pi)) / (1j * np.pi * 0.6)
    v = complex(oracle_cf_rho(unif_normal(), math.pi))
    assert abs(v - closed) < 1e-12
    r = rng.uniform(0.2, 0.8, 10 ** 6)
    assert abs(np.mean(np.exp(1j * math.pi * r)) - closed) < 5e-3


def test_lognormal_has_no_cf():
    law = IndependentProduct(Uniform(0.2, 0.8), LogNormalAbs(0.0, 1.0, 0.5))
    assert oracle_cf_eps(law, 1.0) is None
    assert oracle_joint_cf(law, 1.0, 1.0) is None


@settings(max_examples=30, deadline=None)
@given(i=st.integers(0, len(MARGINALS) - 1), t=st.floats(-50, 50))
def test_cf_invariants(i, t):
    m = MARGINALS[i]
    v = complex(m.cf(t))
    assert abs(v) <= 1 + 1e-12
    assert abs(complex(m.cf(-t)) - v.conjugate()) < 1e-12


def test_cf_vectorized_matches_scalar():
    ts = np.linspace(-3, 3, 13)
    for m in MARGINALS:
        vec = m.cf(ts)
        assert np.allclose(vec, [complex(m.cf(t)) for t in ts], atol=0, rtol=1e-14)


def test_joint_cf_discrete_deterministic_pair():
    law = DiscreteJoint(((0.5, 1.0, 1.0),))
    assert complex(oracle_joint_cf(law, 1.3, -0.7)) == pytest.approx(
        np.exp(1j * (0.5 * 1.3 - 0.7)), abs=1e-15)


def test_joint_cf_independent_factorizes():
    law = unif_normal()
    v = complex(oracle_joint_cf(law, 1.0, 2.0))
    assert v == pytest.approx(complex(law.rho_cf(1.0)) * complex(law.eps_cf(2.0)), abs=1e-15)


def test_joint_cf_zero_inflated(rng):
    law = zero_inflated(0.25)
    rho, eps = law.sample(rng, 10 ** 6)
    mc = np.mean(np.exp(1j * (1.0 * rho + 0.5 * eps)))
    assert abs(complex(oracle_joint_cf(law, 1.0, 0.5)) - mc) < 5e-3


# --------------------------------------------------------------------------
# misc
# --------------------------------------------------------------------------


def test_eps_scale():
    assert eps_scale(unif_normal()) == pytest.approx(stats.norm.ppf(1 - 0.5e-4), rel=1e-9)
    # bounded support: the bound itself
    assert eps_scale(unif_unif()) == 1.0


@pytest.mark.parametrize("law", [unif_normal(), unif_unif(), zero_inflated(0.3),
                                 DiscreteJoint(((0.0, 1.0, 0.3), (0.5, -1.0, 0.7))),
                                 IndependentProduct(FiniteDiscrete((0.1, 0.4), (0.5, 0.5)),
                                                    LogNormalAbs(0.0, 1.0, 0.5))],
                         ids=lambda l: type(l).__name__)
def test_law_dict_roundtrip(law):
    assert law_from_dict(law_to_dict(law)) == law


def test_law_dict_missing_field():
    with pytest.raises(ConfigError, match="'kind'"):
        law_from_dict({"rho_marginal": {}})
    with pytest.raises(ConfigError, match="'eps_marginal'"):
        law_from_dict({"kind": "IndependentProduct", "rho_marginal": {"kind": "Normal",
                                                                       "mean": 0, "sd": 1}})


def test_invalid_parameters():
    with pytest.raises(ValueError):
        Uniform(1.0, 0.0)
    with pytest.raises(ValueError):
        Normal(0.0, -1.0)
    with pytest.raises(ValueError):
        DiscreteJoint(((0.5, 1.0, 0.6),))
