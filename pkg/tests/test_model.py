from __future__ import annotations

from fractions import Fraction as F

import pytest
from hypothesis import given, settings, strategies as st

from thirdorder.model import (
    UNBOUNDED,
    ModelParams,
    ParameterDomainError,
    Profile,
    RegimeError,
    Stability,
    classify_eta,
    critical_exponent,
    decay_rates,
    dimension_window_check,
    global_existence_window,
    gn_admissible_p,
    is_unbounded,
    lifespan_exponent,
)


def independent_p_crit(n, sigma):
    # written out separately from the module: 1 + 6s/(3n - 4s), inf when 3n <= 4s
    n, sigma = F(n), F(sigma)
    if 3 * n <= 4 * sigma:
        return None
    return 1 + 6 * sigma / (3 * n - 4 * sigma)


def independent_lifespan(n, sigma, p):
    n, sigma, p = F(n), F(sigma), F(p)
    pp = p / (p - 1)
    return -2 * sigma / (6 * sigma * pp - 3 * n - 2 * sigma)


def test_params_domain():
    with pytest.raises(ParameterDomainError):
        ModelParams(n=1, sigma=1, eta=0)
    with pytest.raises(ParameterDomainError):
        ModelParams(n=1, sigma=1, eta=1, p=1)
    with pytest.raises(ParameterDomainError):
        ModelParams(n=3, sigma=1, eta=1, torus=True)
    assert ModelParams(n=2, sigma=1, eta=1, torus=True).n == 2


@pytest.mark.parametrize("eta, stab, prof", [
    (0.5, Stability.IllPosedSobolev, Profile.DiffusionWaves),
    (3, Stability.GevreySmoothing, Profile.DegenerateDiffusion),
    (1, Stability.MarginallyStable, Profile.DiffusionWaves),
    (5, Stability.GevreySmoothing, Profile.PureDiffusion),
])
def test_classify_eta_examples(eta, stab, prof):
    info = classify_eta(eta)
    assert (info.stability, info.profile) == (stab, prof)


def test_classify_eta_rejects_nonpositive():
    with pytest.raises(ParameterDomainError):
        classify_eta(0)
    with pytest.raises(ParameterDomainError):
        classify_eta(-1)


def test_classify_tolerance_is_opt_in():
    assert classify_eta(3 + 1e-9).profile is Profile.PureDiffusion
    assert classify_eta(3 + 1e-9, tol=1e-6).profile is Profile.DegenerateDiffusion


@given(st.floats(0.01, 10, allow_nan=False))
def test_classify_piecewise_constant(eta):
    info = classify_eta(eta)
    assert (info.stability is Stability.GevreySmoothing) == (eta > 1)
    assert (info.profile is Profile.DegenerateDiffusion) == (eta == 3)


@pytest.mark.parametrize("n, sigma, expected", [(5, 3, 7), (10, 3, 2), (1, 1, None)])
def test_critical_exponent_examples(n, sigma, expected):
    got = critical_exponent(n, sigma)
    if expected is None:
        assert is_unbounded(got) and got is UNBOUNDED
    else:
        assert got == expected and isinstance(got, F)


def test_critical_exponent_sigma3_table():
    # p_crit(n, 3) = 1 + 6/(n - 4)_+ for n = 1..10
    for n in range(1, 11):
        got = critical_exponent(n, 3)
        if n <= 4:
            assert is_unbounded(got)
        else:
            assert got == 1 + F(6, n - 4)


@settings(max_examples=60)
@given(st.fractions(F(1, 4), 6, max_denominator=12), st.fractions(F(1, 4), 3, max_denominator=12))
def test_critical_exponent_monotone(n, sigma):
    if 3 * n <= 4 * sigma:
        return
    pc = critical_exponent(n, sigma)
    assert pc == independent_p_crit(n, sigma)
    assert critical_exponent(n + F(1, 7), sigma) < pc
    assert critical_exponent(n, sigma + F(1, 97)) > pc


@pytest.mark.parametrize("n, sigma, p, expected", [(1, 1, 2, F(-2, 7)), (5, 3, 2, F(-2, 5))])
def test_lifespan_exponent_examples(n, sigma, p, expected):
    got = lifespan_exponent(n, sigma, p)
    assert got == expected == independent_lifespan(n, sigma, p)


def test_lifespan_exponent_regime_error():
    with pytest.raises(RegimeError):
        lifespan_exponent(5, 3, 7)
    with pytest.raises(RegimeError):
        lifespan_exponent(5, 3, 8)


def test_lifespan_exponent_diverges_near_p_crit():
    vals = [lifespan_exponent(5, 3, 7 - F(1, 10 ** k)) for k in range(1, 6)]
    assert all(b < a < 0 for a, b in zip(vals, vals[1:]))
    assert vals[-1] < -1000


@settings(max_examples=60)
@given(st.fractions(F(1, 2), 6, max_denominator=10), st.fractions(F(1, 2), 3, max_denominator=10),
       st.fractions(F(11, 10), 20, max_denominator=10))
def test_lifespan_negative_in_subcritical(n, sigma, p):
    pc = critical_exponent(n, sigma)
    if not p < pc:
        return
    if 6 * sigma * p / (p - 1) > 3 * n + 2 * sigma:
        assert lifespan_exponent(n, sigma, p) < 0


def test_decay_rates_examples():
    t = decay_rates(1, F(1, 4), 2)
    assert (t.l2_rate, t.hs_rate) == (1, 3)
    assert decay_rates(F(8, 3), 1, 4).log_loss_flag
    assert decay_rates(F(8, 3), 1, 2).l2_rate == 0
    with pytest.raises(RegimeError, match="4 sigma/3"):
        decay_rates(1, 1, 2)


@settings(max_examples=60)
@given(st.fractions(F(1, 2), 8, max_denominator=9), st.fractions(F(1, 4), 3, max_denominator=9),
       st.sampled_from([F(3, 2), 2, 3, 5]))
def test_rate_gap_is_two(n, sigma, eta):
    ok, _ = dimension_window_check(n, sigma, eta)
    if ok:
        t = decay_rates(n, sigma, eta)
        assert t.hs_rate - t.l2_rate == 2


def test_dimension_window_examples():
    assert dimension_window_check(1, 1, 2)[0] is False
    assert dimension_window_check(1, 0.5, 2)[0] is True
    ok, reason = dimension_window_check(F(8, 3), 1, 4)
    assert not ok and "excluded" in reason
    assert dimension_window_check(F(1, 10), 1, 3)[0] is True


@pytest.mark.parametrize("n, sigma, hi", [(3, 1, 9), (1, 1, None), (F(10, 3), 1, 5)])
def test_gn_admissible(n, sigma, hi):
    iv = gn_admissible_p(n, sigma)
    assert iv.lo == 2
    if hi is None:
        assert is_unbounded(iv.hi) and 1000 in iv
    else:
        assert iv.hi == hi and hi in iv and hi + 1 not in iv


def test_gn_admissible_empty():
    with pytest.raises(RegimeError):
        gn_admissible_p(6, 1)


def test_global_existence_window():
    assert global_existence_window(1, F(3, 10))[0]
    ok, reason = global_existence_window(1, F(1, 10))
    assert not ok and "unverified" in reason
