import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rlnd.core import (
    LinearH,
    NormalParams,
    OutOfRangeError,
    ParamFormatError,
    RlndParams,
    TabulatedH,
    dump_params,
    two_term_density,
    h_eval,
    h_max,
    load_params,
    mass_report,
    rlnd_cdf,
    rlnd_cdf_quadrature,
    rlnd_moments,
    rlnd_pdf,
    rlnd_quantile,
    rlnd_sample,
    rlnd_sf,
)
from rlnd.numerics import std_normal_cdf, std_normal_pdf

mpmath.mp.dps = 40

SIGMA_TABLE = 0.0134453931516791
TABLE = RlndParams.symmetric(0.0, SIGMA_TABLE, 24.0, 0.5)
UNIT = RlndParams.symmetric(0.0, 1.0, 24.0, 0.5)
CLASSICAL = RlndParams.symmetric(0.0, 1.0, 0.0, 1.0)


def mp_cdf(p, y):
    """Integral form with h frozen at the evaluation point, in extended precision."""
    t = mpmath.mpf(y) - p.mu
    s = mpmath.mpf(p.sigma) * mpmath.mpf(float(p.h(float(t))))
    return mpmath.quad(lambda x: mpmath.exp(-x * x / (2 * s * s)), [-mpmath.inf, 0, t]) / mpmath.sqrt(2 * mpmath.pi * s * s)


def mp_linear_cdf(p, y):
    t = mpmath.mpf(y) - p.mu
    k = p.h.k_neg if t <= 0 else p.h.k_pos
    return mpmath.ncdf(t / (p.sigma * (k * t + p.h.c)))


# --- h --------------------------------------------------------------------------

def test_h_linear_values():
    h = LinearH(-24, 24, 0.5)
    assert h_eval(h, 0.0) == 0.5
    assert h_eval(h, 0.01) == pytest.approx(0.74, abs=1e-15)
    assert h_eval(h, -0.01) == pytest.approx(0.74, abs=1e-15)


def test_h_linear_invariants():
    with pytest.raises(ValueError):
        LinearH(-1, 1, 0.0)
    with pytest.raises(ValueError):
        LinearH(1, 1, 1.0)
    with pytest.raises(ValueError):
        LinearH(-1, -1, 1.0)
    assert LinearH.symmetric(-3, 2) == LinearH(-3, 3, 2)


@given(st.floats(0, 100), st.floats(0, 100), st.floats(0.01, 10), st.floats(-1e3, 1e3))
def test_h_linear_bounded_below_by_c(kn, kp, c, y):
    assert LinearH(-kn, kp, c)(y) >= c


def test_h_tabulated_interpolates_and_extrapolates_flat():
    h = TabulatedH((-1.0, 0.0, 1.0), (1.0, 2.0, 1.5))
    assert h(-0.5) == 1.5
    assert h(-10.0) == 1.0 and h(10.0) == 1.5
    assert h.is_unimodal
    assert h.slope(-0.5) == 1.0 and h.slope(0.0) == -0.5 and h.slope(5.0) == 0.0


def test_h_tabulated_rejects_bad_tables():
    with pytest.raises(ValueError):
        TabulatedH((0.0, 0.0), (1.0, 1.0))
    with pytest.raises(ValueError):
        TabulatedH((0.0, 1.0), (1.0, -1.0))
    assert not TabulatedH((-1.0, 0.0, 1.0), (1.0, 0.5, 1.0)).is_unimodal


# --- cdf ------------------------------------------------------------------------

def test_cdf_median_and_table_point():
    assert rlnd_cdf(UNIT, 0.0) == 0.5
    expected = float(mp_cdf(TABLE, 0.01))
    assert rlnd_cdf(TABLE, 0.01) == pytest.approx(expected, abs=1e-15)
    assert rlnd_cdf(TABLE, 0.01) == pytest.approx(std_normal_cdf(0.01 / (SIGMA_TABLE * 0.74)), abs=1e-16)
    assert round(rlnd_cdf(TABLE, 0.01), 4) == 0.8426


def test_cdf_classical_reduction():
    y = np.linspace(-5, 5, 1001)
    assert np.max(np.abs(rlnd_cdf(CLASSICAL, y) - std_normal_cdf(y))) <= 1e-14


@pytest.mark.parametrize("y", [-3.0, -0.2, -1e-3, 0.0, 2e-3, 0.07, 1.5, 40.0])
def test_cdf_against_extended_precision_integral(y):
    p = RlndParams(0.1, 0.7, LinearH(-3.0, 11.0, 0.4))
    assert rlnd_cdf(p, y) == pytest.approx(float(mp_cdf(p, y)), abs=2e-16)


def test_cdf_limits_are_mass_report():
    m = mass_report(UNIT)
    assert rlnd_cdf(UNIT, -math.inf) == m.lower_mass
    assert rlnd_cdf(UNIT, math.inf) == m.upper_mass


def test_sf_complements_cdf_up_to_defect():
    y = np.linspace(-3, 3, 61)
    m = mass_report(UNIT)
    assert np.allclose(rlnd_sf(UNIT, y), m.upper_mass - rlnd_cdf(UNIT, y), rtol=0, atol=1e-15)


@pytest.mark.parametrize("params", [UNIT, TABLE, CLASSICAL])
def test_quadrature_matches_closed_form(params):
    s = params.sigma
    for y in np.linspace(-5 * s, 5 * s, 11):
        assert rlnd_cdf_quadrature(params, y) == pytest.approx(rlnd_cdf(params, y), abs=1e-10)
    assert rlnd_cdf_quadrature(UNIT, 0.0) == pytest.approx(0.5, abs=1e-12)
    assert rlnd_cdf_quadrature(CLASSICAL, 1.0) == pytest.approx(0.8413447460685429, abs=1e-10)


def test_cdf_monotone_on_dense_grid():
    for p in (UNIT, TABLE, RlndParams(0.02, 0.5, LinearH(-100, 0.1, 0.01))):
        s = p.sigma * h_max(p)
        y = np.linspace(p.mu - 10 * s, p.mu + 10 * s, 10_000)
        assert np.all(np.diff(rlnd_cdf(p, y)) >= -1e-15)


linear_params = st.builds(
    lambda mu, sigma, kn, kp, c: RlndParams(mu, sigma, LinearH(-kn, kp, c)),
    st.floats(-0.1, 0.1), st.floats(0.001, 10), st.floats(0, 100), st.floats(0, 100), st.floats(0.01, 10))


@settings(max_examples=60, deadline=None)
@given(linear_params, st.floats(-8, 8))
def test_cdf_equals_closed_form_oracle(p, z):
    y = p.mu + z * p.sigma * p.h.c
    assert rlnd_cdf(p, y) == pytest.approx(float(mp_linear_cdf(p, y)), abs=1e-15)


# --- density --------------------------------------------------------------------

def test_pdf_examples():
    assert rlnd_pdf(UNIT, 0.0) == pytest.approx(0.7978845608028654, rel=1e-15)
    assert rlnd_pdf(CLASSICAL, 1.0) == pytest.approx(0.24197072451914337, rel=1e-15)
    for y in (0.5, 1.0, 2.0):
        assert rlnd_pdf(UNIT, y) == pytest.approx(rlnd_pdf(UNIT, -y), rel=1e-15)


def test_pdf_against_mpmath_derivative():
    p = RlndParams(0.0, 1.0, LinearH(-24.0, 24.0, 0.5))
    for y in (-2.0, -0.3, -0.01, 0.004, 0.05, 1.7):
        d = mpmath.diff(lambda v: mp_linear_cdf(p, v), mpmath.mpf(y))
        assert rlnd_pdf(p, y) == pytest.approx(float(d), rel=1e-13)


def test_pdf_right_derivative_at_centre():
    p = RlndParams(0.0, 1.0, LinearH(-2.0, 30.0, 0.5))
    step = 1e-7
    # second-order one-sided stencil; the first-order one is off by ~K/c^2 * step
    f0, f1, f2 = (rlnd_cdf(p, k * step) for k in (0, 1, 2))
    right = (-3 * f0 + 4 * f1 - f2) / (2 * step)
    assert rlnd_pdf(p, 0.0) == pytest.approx(right, abs=1e-6)


def test_pdf_finite_difference_away_from_centre():
    p = RlndParams(0.001, 0.02, LinearH(-5.0, 9.0, 0.8))
    y = p.mu + np.linspace(-0.2, 0.2, 41)
    y = y[np.abs(y - p.mu) > 1e-6]
    step = 1e-7
    fd = (rlnd_cdf(p, y + step) - rlnd_cdf(p, y - step)) / (2 * step)
    assert np.max(np.abs(fd - rlnd_pdf(p, y))) <= 1e-6


def test_pdf_tabulated_uses_right_slope_at_knots():
    p = RlndParams(0.0, 1.0, TabulatedH((-1.0, 0.0, 1.0), (1.0, 2.0, 1.0)))
    for y in (-1.0, 0.0, 0.5):
        right = (rlnd_cdf(p, y + 1e-7) - rlnd_cdf(p, y)) / 1e-7
        assert rlnd_pdf(p, y) == pytest.approx(right, abs=1e-6)


def test_two_term_examples():
    assert two_term_density(UNIT, 0.0) == pytest.approx(0.7978845608, abs=1e-8)
    for y in (-0.05, 0.05):
        assert two_term_density(UNIT, y) == pytest.approx(rlnd_pdf(UNIT, y), abs=1e-8)
    assert two_term_density(CLASSICAL, 1.0) == pytest.approx(0.2419707245, abs=1e-8)


@pytest.mark.parametrize("y", [-0.03, -0.005, 0.0, 0.002, 0.01, 0.04])
def test_two_term_matches_closed_form_with_general_sigma(y):
    assert two_term_density(TABLE, y) == pytest.approx(rlnd_pdf(TABLE, y), abs=1e-8)


def test_two_term_rejects_tabulated():
    with pytest.raises(TypeError):
        two_term_density(RlndParams(0.0, 1.0, TabulatedH((0.0,), (1.0,))), 0.1)


def test_density_integrates_to_finite_mass():
    from rlnd.numerics import integrate

    for p in (UNIT, TABLE, RlndParams(0.0, 0.3, LinearH(-2.0, 7.0, 1.3))):
        s = p.sigma * p.h.c
        pts = [p.mu + j * s for j in (-50, -5, 0, 5, 50)]
        total = integrate(lambda y: rlnd_pdf(p, y), -math.inf, math.inf, points=pts)
        assert total == pytest.approx(mass_report(p).mass, abs=1e-8)


# --- mass -----------------------------------------------------------------------

def test_mass_report_examples():
    assert mass_report(UNIT).defect == pytest.approx(float(2 * (1 - mpmath.ncdf(mpmath.mpf(1) / 24))), abs=1e-15)
    assert round(mass_report(UNIT).defect, 4) == 0.9668
    d = mass_report(TABLE).defect
    assert d == pytest.approx(float(2 * mpmath.ncdf(-1 / (mpmath.mpf(SIGMA_TABLE) * 24))), rel=1e-13)
    assert round(d, 5) == 0.00194
    assert mass_report(CLASSICAL).defect == 0.0


def test_mass_report_one_sided_slope():
    m = mass_report(RlndParams(0.0, 1.0, LinearH(0.0, 2.0, 1.0)))
    assert m.lower_mass == 0.0
    assert m.upper_mass == pytest.approx(std_normal_cdf(0.5))


def test_mass_report_tabulated_is_complete():
    m = mass_report(RlndParams(0.0, 1.0, TabulatedH((-1.0, 1.0), (1.0, 1.0))))
    assert m.lower_mass == 0.0 and m.upper_mass == 1.0 and m.defect == 0.0


# --- quantile -------------------------------------------------------------------

def test_quantile_examples():
    assert rlnd_quantile(UNIT, 0.5) == 0.0
    prob = rlnd_cdf(TABLE, 0.01)
    assert rlnd_quantile(TABLE, prob) == pytest.approx(0.01, abs=1e-10)
    with pytest.raises(OutOfRangeError):
        rlnd_quantile(UNIT, 0.999)


@settings(max_examples=80, deadline=None)
@given(linear_params, st.floats(0.001, 0.999))
def test_quantile_inverts_cdf(p, u):
    m = mass_report(p)
    prob = m.lower_mass + u * m.mass
    y = rlnd_quantile(p, prob)
    assert rlnd_cdf(p, y) == pytest.approx(prob, abs=1e-10)


def test_quantile_tabulated_round_trip():
    p = RlndParams(0.01, 0.02, TabulatedH((-0.05, 0.0, 0.05), (0.8, 1.6, 0.9)))
    for prob in (0.001, 0.2, 0.5, 0.77, 0.999):
        assert rlnd_cdf(p, rlnd_quantile(p, prob)) == pytest.approx(prob, abs=1e-10)


def test_classical_reduction_quantile():
    p = RlndParams.symmetric(0.3, 2.0, 0.0, 1.0)
    n = NormalParams(0.3, 2.0)
    for prob in (1e-6, 0.01, 0.3, 0.5, 0.9, 0.999999):
        assert rlnd_quantile(p, prob) == pytest.approx(n.ppf(prob), abs=1e-12)


# --- sampling -------------------------------------------------------------------

def test_sample_contract():
    with pytest.raises(ValueError):
        rlnd_sample(UNIT, 0, seed=1)
    one = rlnd_sample(UNIT, 1, seed=1)
    assert one.shape == (1,) and np.isfinite(one[0])
    assert np.array_equal(rlnd_sample(TABLE, 50, seed=7), rlnd_sample(TABLE, 50, seed=7))


def test_sample_classical_ks():
    x = np.sort(rlnd_sample(CLASSICAL, 100_000, seed=11))
    ecdf_hi = np.arange(1, x.size + 1) / x.size
    ecdf_lo = np.arange(0, x.size) / x.size
    f = std_normal_cdf(x)
    ks = max(np.max(ecdf_hi - f), np.max(f - ecdf_lo))
    assert ks < 0.01


def test_sample_follows_renormalized_law():
    x = np.sort(rlnd_sample(UNIT, 50_000, seed=5))
    m = mass_report(UNIT)
    f = (rlnd_cdf(UNIT, x) - m.lower_mass) / m.mass
    ks = np.max(np.abs(np.arange(1, x.size + 1) / x.size - f))
    assert ks < 0.01


# --- moments --------------------------------------------------------------------

def test_moments_classical():
    mean, var, skew, kurt = rlnd_moments(CLASSICAL)
    assert abs(mean) < 1e-8 and var == pytest.approx(1.0, abs=1e-8)
    assert abs(skew) < 1e-8 and abs(kurt) < 1e-8


def test_moments_diverge_with_slope():
    mom = rlnd_moments(TABLE)
    assert mom.excess_kurtosis > 0
    assert math.isinf(mom.variance)
    assert math.isinf(rlnd_moments(RlndParams(0, 1, LinearH(0.0, 1.0, 1.0))).mean)


def test_trimmed_moments_symmetric_and_leptokurtic():
    mom = rlnd_moments(TABLE, trim=0.005)
    assert abs(mom.skewness) < 1e-8
    assert mom.excess_kurtosis > 0
    # classical trimmed law is platykurtic, so the sign is not a trimming artefact
    assert rlnd_moments(CLASSICAL, trim=0.005).excess_kurtosis < 0


# --- serialisation ----------------------------------------------------------------

@settings(max_examples=40, deadline=None)
@given(linear_params)
def test_params_round_trip(p):
    assert load_params(dump_params(p)) == p


def test_params_round_trip_tabulated():
    p = RlndParams(0.1, 0.2, TabulatedH((-0.1, 0.0, 0.3), (1.0, 1 / 3, 0.5)))
    assert load_params(dump_params(p)) == p


@pytest.mark.parametrize("text, needle", [
    ("mu = 0\nsigma = x\nk_neg = 0\nk_pos = 0\nc = 1\n", "line 2"),
    ("mu = 0\nsigma = 1\nk_neg = 0\nk_pos = 0\n", "c"),
    ("mu = 0\nsigma = 1\nfoo = 3\n", "line 3"),
    ("mu = 0\nsigma = -1\nk_neg = 0\nk_pos = 0\nc = 1\n", "sigma"),
    ("mu = 0\nsigma = 1\ny,h\n0,1,2\n", "line 4"),
])
def test_params_parse_errors(text, needle):
    with pytest.raises(ParamFormatError, match=needle):
        load_params(text)
