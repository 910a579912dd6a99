import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from newsvar import distributions as dist
from newsvar.distributions import ErrorLaw, LawKind, ShapeError

from . import oracles

GED_SHAPES = (0.8, 1.0, 1.5, 2.0, 3.0)
T_SHAPES = (2.5, 5.0, 10.0, 50.0)
ALL_LAWS = [ErrorLaw.gaussian()] + [ErrorLaw.ged(v) for v in GED_SHAPES] + [ErrorLaw.student_t(v) for v in T_SHAPES]


def _moment(law, power):
    val, _ = integrate.quad(lambda z: z**power * dist.pdf(law, z), -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12,
                            limit=400)
    return val


@pytest.mark.parametrize("law", ALL_LAWS, ids=str)
def test_unit_mass_and_variance(law):
    assert abs(_moment(law, 0) - 1.0) < 1e-8
    assert abs(_moment(law, 2) - 1.0) < 1e-6


def test_ged_two_is_gaussian():
    z = np.linspace(-8, 8, 401)
    np.testing.assert_allclose(dist.log_pdf(ErrorLaw.ged(2.0), z), dist.log_pdf(ErrorLaw.gaussian(), z),
                               rtol=0, atol=1e-12)
    assert dist.pdf(ErrorLaw.ged(2.0), 0.0) == pytest.approx(1 / math.sqrt(2 * math.pi), abs=1e-12)


def test_ged_one_is_unit_laplace():
    assert dist.pdf(ErrorLaw.ged(1.0), 0.0) == pytest.approx(math.sqrt(2) / 2, abs=1e-12)


def test_student_large_shape_close_to_gaussian():
    z = np.linspace(-4, 4, 161)
    t200, gauss = ErrorLaw.student_t(200.0), ErrorLaw.gaussian()
    assert np.abs(dist.cdf(t200, z) - dist.cdf(gauss, z)).max() < 1e-3
    # the density gap peaks at z=0; exact value from mpmath
    gap = np.abs(dist.pdf(t200, z) - dist.pdf(gauss, z))
    assert gap.max() == pytest.approx(0.00150892260931884, abs=1e-12)
    assert gap.argmax() == 80


def test_student_density_at_zero():
    # frozen from mpmath evaluation of the scaled classical t density
    assert dist.pdf(ErrorLaw.student_t(5.0), 0.0) == pytest.approx(0.4900701292638147, abs=1e-12)


def test_log_pdf_ged_matches_reference():
    assert dist.log_pdf(ErrorLaw.ged(1.5), 3.0) == pytest.approx(-4.881827672428445, abs=1e-12)


@pytest.mark.parametrize("law", ALL_LAWS, ids=str)
def test_log_pdf_equals_log_of_pdf(law):
    z = np.linspace(-10, 10, 81)
    p = dist.pdf(law, z)
    ok = p > 1e-300
    np.testing.assert_allclose(dist.log_pdf(law, z)[ok], np.log(p[ok]), rtol=0, atol=1e-12)
    ref = [oracles.log_density(law.kind.value, law.shape, float(v)) for v in z]
    np.testing.assert_allclose(dist.log_pdf(law, z), ref, rtol=1e-12, atol=1e-11)


def test_quantiles_known_values():
    assert dist.quantile(ErrorLaw.gaussian(), 0.001) == pytest.approx(-3.0902323061678136, abs=1e-9)
    # high-precision CDF inversion of the scaled t
    assert dist.quantile(ErrorLaw.student_t(5.0), 0.01) == pytest.approx(-2.60646356938428, abs=1e-8)
    for law in ALL_LAWS:
        assert dist.quantile(law, 0.5) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("law", ALL_LAWS, ids=str)
def test_cdf_inverts_quantile(law):
    taus = np.array([1e-6, 1e-4, 0.001, 0.01, 0.05, 0.3, 0.5, 0.8, 0.99])
    np.testing.assert_allclose(dist.cdf(law, dist.quantile(law, taus)), taus, rtol=1e-8, atol=1e-12)


def test_survival_function_is_symmetric_complement():
    law = ErrorLaw.ged(3.0)
    z = np.linspace(-6, 6, 25)
    np.testing.assert_allclose(dist.sf(law, z), 1.0 - dist.cdf(law, z), atol=1e-15)
    assert dist.sf(law, 6.0) > 0.0


def test_bracketed_fallback_agrees_with_closed_form():
    law = ErrorLaw.ged(1.3)
    for tau in (0.001, 0.2, 0.7):
        assert dist._bracketed_quantile(law, tau) == pytest.approx(dist.quantile(law, tau), abs=1e-9)


def test_quantile_rejects_bad_tau():
    with pytest.raises(ValueError):
        dist.quantile(ErrorLaw.gaussian(), 1.0)


def test_abs_moments():
    assert dist.abs_moment(ErrorLaw.gaussian()) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-15)
    assert dist.abs_moment(ErrorLaw.ged(2.0)) == pytest.approx(math.sqrt(2 / math.pi), abs=1e-14)
    assert dist.abs_moment(ErrorLaw.student_t(5.0)) == pytest.approx(0.7351051938957222, abs=1e-10)
    for law in ALL_LAWS[1:]:
        assert dist.abs_moment(law) == pytest.approx(oracles.abs_moment(law.kind.value, law.shape), rel=1e-8)


def test_student_abs_moment_monte_carlo():
    law = ErrorLaw.student_t(5.0)
    draws = np.abs(dist.sample(law, 11, 10**7))
    se = draws.std() / math.sqrt(draws.size)
    assert abs(draws.mean() - dist.abs_moment(law)) < 3 * se


def test_sampling_moments_and_determinism():
    g = dist.sample(ErrorLaw.gaussian(), 3, 10**6)
    assert abs(g.mean()) < 0.01 and abs(g.var() - 1) < 0.01
    lap = dist.sample(ErrorLaw.ged(1.0), 4, 10**6)
    kurt = np.mean((lap - lap.mean()) ** 4) / lap.var() ** 2
    assert abs(kurt - 6.0) < 0.15
    for law in ALL_LAWS:
        a = dist.sample(law, 5, 1000)
        np.testing.assert_array_equal(a, dist.sample(law, 5, 1000))


def test_shape_domain():
    with pytest.raises(ShapeError):
        ErrorLaw.student_t(2.0)
    with pytest.raises(ShapeError):
        ErrorLaw.ged(0.0)
    with pytest.raises(ShapeError):
        ErrorLaw(LawKind.GAUSSIAN, 3.0)


@settings(max_examples=60, deadline=None)
@given(nu=st.floats(0.6, 6.0), tau=st.floats(1e-5, 1 - 1e-5))
def test_ged_quantile_roundtrip_property(nu, tau):
    law = ErrorLaw.ged(nu)
    assert dist.cdf(law, dist.quantile(law, tau)) == pytest.approx(tau, rel=1e-7, abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(nu=st.floats(2.05, 100.0), z=st.floats(-20, 20))
def test_student_symmetry_property(nu, z):
    law = ErrorLaw.student_t(nu)
    assert dist.pdf(law, z) == pytest.approx(dist.pdf(law, -z), rel=1e-12)
    assert dist.cdf(law, z) + dist.cdf(law, -z) == pytest.approx(1.0, abs=1e-12)
