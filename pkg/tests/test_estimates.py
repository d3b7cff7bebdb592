from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.special import gamma, gammainc

from thirdorder.estimates import (
    DecayFit,
    HypothesisError,
    fit_rate,
    lemma41_check,
    lemma41_integral,
    lemma41_rate,
    lemma42_integrals,
    lemma42_rate,
    sharpness_check,
)
from thirdorder.model import ParameterDomainError
from thirdorder.propagator import NormSeries, log_times


def small_frequency_oracle(s, n, sigma, c, t, eps0):
    """Closed form via the lower incomplete gamma function.

    With w = 2 c t r^b, b = 2 sigma / 3, m = 2s + n:
    integral_0^eps0 r^(m-1) e^(-2ct r^b) dr = gamma(m/b) P(m/b, 2ct eps0^b) / (b (2ct)^(m/b)).
    """
    b = 2 * sigma / 3
    m = 2 * s + n
    k = 2 * c * t
    val = gamma(m / b) * gammainc(m / b, k * eps0 ** b) / (b * k ** (m / b))
    return math.sqrt(val)


# -- fit_rate ----------------------------------------------------------------

def test_fit_exact_power():
    ts = log_times(1e2, 1e4)
    fit = fit_rate(NormSeries(ts, ts ** -2.0))
    assert fit.slope == pytest.approx(-2, abs=1e-12)
    assert fit.rms_residual < 1e-12 and not fit.curved


def test_fit_with_correction():
    ts = log_times(1e2, 1e4)
    fit = fit_rate(NormSeries(ts, (1 + 1 / ts) / ts))
    assert fit.slope == pytest.approx(-1, abs=0.01)


def test_fit_logarithmic_flagged():
    ts = log_times(1e2, 1e4)
    fit = fit_rate(NormSeries(ts, np.log(math.e + ts)))
    assert 0.0 <= fit.slope <= 0.15
    assert fit.curved


def test_fit_errors():
    ts = log_times(1e2, 1e4)
    with pytest.raises(ValueError):
        fit_rate(NormSeries(ts, np.where(ts > 1e3, 0.0, 1.0)))
    with pytest.raises(ValueError):
        fit_rate(NormSeries(ts, ts), window=(1e2, 1.5e2))
    with pytest.raises(ValueError):
        DecayFit(0, 0, 0, (2, 1), 10)
    with pytest.raises(ValueError):
        DecayFit(0, 0, 0, (1, 2), 3)


@settings(max_examples=40)
@given(st.floats(-4, 2), st.floats(0.1, 10))
def test_fit_recovers_slope(rate, amp):
    ts = log_times(1.0, 1e3)
    assert fit_rate(NormSeries(ts, amp * ts ** rate)).slope == pytest.approx(rate, abs=1e-9)


# -- sharpness_check ---------------------------------------------------------

def test_sharpness_exact_series():
    ts = log_times(1e2, 1e4)
    rep = sharpness_check(NormSeries(ts, 3 * ts ** -1.5), -1.5)
    assert rep.passed
    assert rep.c_lower == pytest.approx(3) and rep.c_upper == pytest.approx(3)
    assert rep.to_dict()["pass"] is True


def test_sharpness_wrong_rate_fails():
    ts = log_times(1e2, 1e4)
    rep = sharpness_check(NormSeries(ts, ts ** -0.8), -1.0)
    assert not rep.passed and rep.drift > 0.5


def test_sharpness_empty_window():
    ts = log_times(1e2, 1e4)
    with pytest.raises(ValueError):
        sharpness_check(NormSeries(ts, ts), 1.0, window=(1e5, 1e6))


def test_sharpness_on_quadrature_series():
    ts = log_times(1e3, 1e4)
    vals = [lemma41_integral(0, 1, 0.75, 1.0, t) for t in ts]
    rep = sharpness_check(NormSeries(ts, vals), lemma41_rate(0, 1, 0.75))
    assert rep.passed and rep.drift < 0.05


# -- small-frequency decay integral -----------------------------------------------

@pytest.mark.parametrize("s, n, sigma, c, t, eps0", [
    (0, 1, 0.75, 1.0, 10.0, 1.0), (0.5, 2, 1.0, 0.5, 100.0, 1.0), (1, 3, 3.0, 2.0, 1.0, 0.5),
    (0, 0.5, 0.25, 1.0, 1e3, 1.0), (2, 4, 1.5, 0.3, 7.0, 2.0),
])
def test_lemma41_gamma_oracle(s, n, sigma, c, t, eps0):
    got = lemma41_integral(s, n, sigma, c, t, eps0)
    assert got == pytest.approx(small_frequency_oracle(s, n, sigma, c, t, eps0), rel=1e-9)


def test_lemma41_zero_time():
    assert lemma41_integral(0.5, 2, 1, 1, 0.0, 0.7) == pytest.approx(math.sqrt(0.7 ** 3 / 3), rel=1e-15)


def test_lemma41_hypothesis():
    with pytest.raises(HypothesisError):
        lemma41_integral(-0.5, 1, 1, 1, 1.0)
    with pytest.raises(ParameterDomainError):
        lemma41_integral(0, 1, 1, -1, 1.0)


def test_lemma41_rate_example():
    v1 = lemma41_integral(0, 1, 0.75, 1.0, 1e3)
    v4 = lemma41_integral(0, 1, 0.75, 1.0, 4e3)
    assert v4 / v1 == pytest.approx(0.25, rel=0.02)
    assert lemma41_check(0, 1, 0.75).passed


@settings(max_examples=30, deadline=None)
@given(st.floats(0, 2), st.floats(0.5, 4), st.floats(0.25, 3), st.floats(0.1, 3), st.floats(0.1, 100))
def test_lemma41_monotone(s, n, sigma, c, t):
    base = lemma41_integral(s, n, sigma, c, t)
    assert lemma41_integral(s, n, sigma, c, 1.5 * t) < base
    assert lemma41_integral(s, n, sigma, 1.5 * c, t) < base


# -- oscillatory integrals ---------------------------------------------------------

def test_lemma42_zero_time():
    assert lemma42_integrals(0.0, 2.0, 3, 1) == (0.0, 0.0)


def test_lemma42_hypothesis():
    with pytest.raises(HypothesisError):
        lemma42_integrals(1.0, 3.5, 3, 1)
    with pytest.raises(HypothesisError):
        lemma42_integrals(1.0, 2.0, 1, 1)


@pytest.mark.parametrize("n, which", [(2, 0), (3, 1), (3, 0)])
def test_lemma42_rates(n, which):
    ts = log_times(1e2, 1e4)
    vals = [lemma42_integrals(t, 2.0, n, 1.0)[which] for t in ts]
    fit = fit_rate(NormSeries(ts, vals))
    assert fit.slope == pytest.approx(lemma42_rate(n, 1.0), abs=0.05)
