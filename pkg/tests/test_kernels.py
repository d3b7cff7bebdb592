from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad, solve_ivp

from thirdorder import kernels
from thirdorder.kernels import (
    Regime,
    abel_defect,
    char_roots,
    duhamel_weights,
    envelope_constant,
    exp_divided_differences,
    kernel_ode_residual,
    kernel_values,
    pointwise_envelope,
    scaled_roots,
    weighted_kernel_magnitude,
)


def ode_oracle(t, r, sigma, eta):
    """Integrate the Fourier ODE from the three unit initial vectors."""
    rho = r ** (2 * sigma / 3)

    def rhs(_, y):
        u, v, w = y
        return [v, w, -(eta * rho * w + eta * rho ** 2 * v + rho ** 3 * u)]

    cols = []
    for j in range(3):
        y0 = np.zeros(3)
        y0[j] = 1.0
        sol = solve_ivp(rhs, (0, t), y0, method="DOP853", rtol=1e-13, atol=1e-15)
        cols.append(sol.y[:, -1])
    return np.array(cols).T  # [i, j] = d^i K_j


def closed_form_below3(t, r, sigma, eta):
    """Explicit cos/sin representation valid for 0 < eta < 3, eta != 3."""
    rho = r ** (2 * sigma / 3)
    C = 0.5 * math.sqrt(3 + 2 * eta - eta ** 2)
    e1 = math.exp(-rho * t)
    damp = math.exp(0.5 * (1 - eta) * rho * t)
    c, s = math.cos(C * rho * t) * damp, math.sin(C * rho * t) * damp
    K0 = -e1 / (eta - 3) + (eta - 2) / (eta - 3) * c + eta / (2 * C) * s
    K1 = (-(eta - 1) * e1 / (eta - 3) + (eta - 1) / (eta - 3) * c + (eta + 1) / (2 * C) * s) / rho
    K2 = (-e1 / (eta - 3) + c / (eta - 3) + s / (2 * C)) / rho ** 2
    return K0, K1, K2


def closed_form_above3(t, r, sigma, eta):
    """Explicit real-exponential representation valid for eta > 3."""
    rho = r ** (2 * sigma / 3)
    D = 0.5 * math.sqrt(eta ** 2 - 2 * eta - 3)
    e1 = math.exp(-rho * t)
    h = math.exp(0.5 * (1 - eta) * rho * t)
    ep, em = math.exp(D * rho * t), math.exp(-D * rho * t)
    a, b = 3 - eta + 2 * D, 3 - eta - 2 * D
    K0 = e1 / (3 - eta) + h / (2 * D) * ((2 * D - 1 + eta) / a * ep + (2 * D + 1 - eta) / b * em)
    K1 = ((eta - 1) * e1 / (3 - eta) + h / (2 * D) * ((2 * D + 1 + eta) / a * ep
                                                       + (2 * D - 1 - eta) / b * em)) / rho
    K2 = (e1 / (3 - eta) + h / D * (ep / a - em / b)) / rho ** 2
    return K0, K1, K2


# -- roots ---------------------------------------------------------------

@pytest.mark.parametrize("sigma", [0.5, 1.5])
def test_roots_degenerate(sigma):
    cr = char_roots(3.0, 2.0, sigma)
    rho = 2.0 ** (2 * sigma / 3)
    assert cr.regime is Regime.Degenerate
    assert np.allclose(cr.roots, -rho, atol=1e-15)


def test_roots_marginal_and_real():
    cr = char_roots(1.0, 1.0, 0.7)
    assert sorted(cr.roots[1:].imag) == pytest.approx([-1, 1])
    assert np.abs(cr.roots[1:].real).max() < 1e-15
    cr = char_roots(5.0, 1.0, 1.0)
    assert cr.regime is Regime.RealDistinct
    assert sorted(cr.roots[1:].real) == pytest.approx([-2 - math.sqrt(3), -2 + math.sqrt(3)])
    for lam in cr.roots:
        assert abs(lam ** 3 + 5 * lam ** 2 + 5 * lam + 1) < 1e-12


@settings(max_examples=80)
@given(st.floats(0.05, 8), st.floats(0.01, 5), st.floats(0.2, 3))
def test_vieta(eta, r, sigma):
    cr = char_roots(eta, r, sigma)
    l1, l2, l3 = cr.roots
    rho = cr.rho
    assert l1 == pytest.approx(-rho, rel=1e-15)
    assert (l1 + l2 + l3) == pytest.approx(-eta * rho, rel=1e-12, abs=1e-300)
    assert (l1 * l2 + l1 * l3 + l2 * l3) == pytest.approx(eta * rho ** 2, rel=1e-12)
    assert (l1 * l2 * l3) == pytest.approx(-rho ** 3, rel=1e-12)
    re = l2.real
    assert (re < 0) == (eta > 1)


# -- divided differences --------------------------------------------------

def test_divided_difference_routes_agree():
    nodes = np.array([-1.0, -0.3 + 0.8j, -0.3 - 0.8j])
    tau = np.linspace(0.6, 30, 50)
    pf = kernels._partial_fractions(nodes, tau, 4)
    op = kernels._opitz(nodes.astype(complex), tau, 4)
    assert np.abs(pf - op).max() / np.abs(pf).max() < 1e-12


def test_divided_difference_confluent():
    # e[l, l, l](tau) = tau^2 / 2 e^(l tau)
    tau = np.array([0.1, 1.0, 7.0])
    got = exp_divided_differences([-1, -1, -1], tau, 0)[0]
    assert np.allclose(got, tau ** 2 / 2 * np.exp(-tau), rtol=1e-14)


# -- kernel values ---------------------------------------------------------

def test_r_zero_polynomials():
    kv = kernel_values(2.0, 0.0, 1.0, 2.0)
    assert (kv.K0, kv.K1, kv.K2) == (1.0, 2.0, 2.0)
    assert (kv.dK0, kv.dK1, kv.dK2, kv.ddK2) == (0.0, 1.0, 2.0, 1.0)


@pytest.mark.parametrize("eta", [0.5, 1.0, 2.0, 3.0, 5.0])
def test_identity_at_zero(eta):
    kv = kernel_values(np.zeros(4), np.array([0, 0.5, 1, 4.0]), 1.5, eta)
    assert np.array_equal(kv.M, np.broadcast_to(np.eye(3), (4, 3, 3)))


def test_negative_time_rejected():
    with pytest.raises(ValueError):
        kernel_values(-1.0, 1.0, 1.0, 2.0)


@pytest.mark.parametrize("t, r, sigma, eta", [
    (1.0, 1.0, 1.5, 2.0), (3.0, 0.7, 1.0, 0.5), (2.0, 2.0, 0.5, 1.0), (5.0, 1.3, 3.0, 3.0),
    (1.5, 1.0, 1.0, 5.0), (0.3, 4.0, 1.0, 3.0 + 1e-6), (10.0, 0.2, 1.5, 2.5),
])
def test_against_ode_oracle(t, r, sigma, eta):
    M = kernel_values(t, r, sigma, eta).M
    ref = ode_oracle(t, r, sigma, eta)
    scale = np.abs(ref).max(axis=0)
    assert np.abs(M - ref).max() / scale.max() < 1e-8


@pytest.mark.parametrize("t, r, sigma, eta", [(1.0, 1.0, 1.5, 2.0), (4.0, 0.6, 1.0, 0.5),
                                               (2.0, 1.5, 0.75, 1.0), (0.7, 2.0, 1.0, 2.9)])
def test_against_explicit_cos_sin_form(t, r, sigma, eta):
    kv = kernel_values(t, r, sigma, eta)
    for got, want in zip((kv.K0, kv.K1, kv.K2), closed_form_below3(t, r, sigma, eta)):
        assert float(got) == pytest.approx(want, rel=1e-10, abs=1e-13)


@pytest.mark.parametrize("t, r, sigma, eta", [(1.0, 1.0, 1.0, 5.0), (2.0, 0.5, 1.5, 4.0),
                                               (0.4, 3.0, 0.5, 8.0)])
def test_against_explicit_real_exponential_form(t, r, sigma, eta):
    kv = kernel_values(t, r, sigma, eta)
    for got, want in zip((kv.K0, kv.K1, kv.K2), closed_form_above3(t, r, sigma, eta)):
        assert float(got) == pytest.approx(want, rel=1e-10, abs=1e-13)


def test_degenerate_k2():
    t, r = np.array([0.5, 1.0, 3.0]), np.array([1.0, 2.0, 0.5])
    rho = r ** (2 / 3)
    kv = kernel_values(t, r, 1.0, 3.0)
    assert np.allclose(kv.K2, t ** 2 / 2 * np.exp(-rho * t), rtol=1e-13)


def test_continuity_at_three():
    base = kernel_values(1.0, 1.0, 1.0, 3.0).M
    for d in (-1e-6, 1e-6):
        near = kernel_values(1.0, 1.0, 1.0, 3.0 + d).M
        assert np.abs(near - base).max() / np.abs(base).max() < 1e-4


def test_theta_zero_breaks_continuity():
    with np.errstate(all="ignore"):
        M = kernel_values(1.0, 1.0, 1.0, 3.0, theta=0.0).M
    assert not np.all(np.isfinite(M))


def test_realness():
    kv = kernel_values(np.linspace(0, 10, 50), 1.3, 1.0, 2.0)
    assert kv.imag_ratio < 1e-10


# -- residual and Abel -------------------------------------------------------

def test_residual_r_zero_and_degenerate():
    assert np.all(kernel_ode_residual(np.array([1.0, 5.0]), 0.0, 1.0, 2.0) == 0)
    assert kernel_ode_residual(1.0, 1.0, 1.0, 3.0) < 1e-9


def test_residual_random_sweep():
    rng = np.random.default_rng(7)
    t, r = rng.uniform(0, 10, 100), rng.uniform(0, 5, 100)
    for eta in (0.5, 1.0, 2.0, 3.0, 5.0):
        assert kernel_ode_residual(t, r, 1.0, eta).max() < 1e-7
        assert abel_defect(t, r, 1.0, eta).max() < 1e-8


def test_residual_detects_corrupted_roots(monkeypatch):
    true_roots = kernels.scaled_roots

    def flipped(eta):
        lam = true_roots(eta)
        # flip the sign of the damping exponent of the paired roots
        return np.array([lam[0], -lam[1].real + 1j * lam[1].imag, -lam[2].real + 1j * lam[2].imag])

    monkeypatch.setattr(kernels, "scaled_roots", flipped)
    assert kernel_ode_residual(np.array([1.0, 2.0]), 1.0, 1.0, 5.0).max() > 1e-3


def test_abel_identity_direct():
    t, r, sigma, eta = 2.0, 1.2, 1.0, 2.0
    M = kernel_values(t, r, sigma, eta).M
    rho = r ** (2 * sigma / 3)
    assert np.linalg.det(M) == pytest.approx(math.exp(-eta * rho * t), rel=1e-10)


# -- Duhamel weights ------------------------------------------------------------

@pytest.mark.parametrize("eta", [0.5, 2.0, 3.0, 5.0])
def test_duhamel_weights_quadrature(eta):
    h, sigma = 0.7, 1.0
    r = np.array([0.0, 0.3, 1.0, 3.0])
    w = duhamel_weights(h, r, sigma, eta)
    for k, rk in enumerate(r):
        ref = quad(lambda s: float(kernel_values(s, rk, sigma, eta).K2), 0, h, epsabs=1e-15)[0]
        assert w[0, k] == pytest.approx(ref, rel=1e-10, abs=1e-15)
        assert w[1, k] == pytest.approx(float(kernel_values(h, rk, sigma, eta).K2), rel=1e-13)
        assert w[2, k] == pytest.approx(float(kernel_values(h, rk, sigma, eta).dK2), rel=1e-13)


# -- envelopes ----------------------------------------------------------------

def test_envelope_marginal_bounded():
    t = np.linspace(0, 200, 4001)
    k0 = np.abs(kernel_values(t, 1.0, 1.0, 1.0, order=0).K0)
    assert k0.max() <= 2.0


def test_envelope_growth_rate():
    # compare peaks over one oscillation period to remove the phase wobble
    period = 2 * math.pi / (0.5 * math.sqrt(3 + 1 - 0.25))
    w = np.linspace(0, period, 400)
    lo = weighted_kernel_magnitude(100 + w, 1.0, 1.5, 0.5).max()
    hi = weighted_kernel_magnitude(200 + w, 1.0, 1.5, 0.5).max()
    rate = math.log(hi / lo) / 100
    assert rate == pytest.approx(0.25, rel=0.01)


def test_envelope_slowest_decay():
    t = np.array([40.0, 80.0])
    mag = weighted_kernel_magnitude(t, 2.0, 1.5, 5.0)
    rate = -math.log(mag[1] / mag[0]) / 40
    expected = abs(-2 + math.sqrt(3)) * 2.0
    assert rate == pytest.approx(expected, rel=0.02)


@pytest.mark.parametrize("eta", [0.5, 1.0, 2.0, 3.0, 5.0])
def test_envelope_bounds_kernels(eta):
    t = np.linspace(0, 40, 400)[:, None]
    r = np.linspace(0.05, 3, 40)[None, :]
    ratio = weighted_kernel_magnitude(t, r, 1.0, eta) / pointwise_envelope(t, r, 1.0, eta)
    assert ratio.max() < 10.0
    assert envelope_constant(eta) >= 0 or eta < 1
