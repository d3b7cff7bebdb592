from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from thirdorder.spectral import (
    GridError,
    TorusGrid,
    dealias,
    forward,
    fractional_laplacian,
    inverse,
    lp_norm,
    sobolev_norm,
)


@pytest.fixture
def grid():
    return TorusGrid(1, 2 * math.pi, 64)


def test_grid_validation():
    with pytest.raises(GridError):
        TorusGrid(1, 10.0, 63)
    with pytest.raises(GridError):
        TorusGrid(3, 10.0, 8)
    with pytest.raises(GridError):
        TorusGrid(1, -1.0, 8)
    g = TorusGrid(2, 10.0, 8)
    assert g.shape == (8, 8)
    assert sorted(g.mode_index) == list(range(-4, 4))


def test_shape_mismatch(grid):
    with pytest.raises(GridError):
        forward(grid, np.zeros(10))


def test_constant_field(grid):
    spec = forward(grid, np.full(grid.shape, 3.0))
    assert spec[0] == pytest.approx(3.0 * grid.N)
    assert np.abs(spec[1:]).max() < 1e-12


def test_sine_two_modes(grid):
    x = grid.axis
    spec = forward(grid, np.sin(3 * x))
    nz = np.flatnonzero(np.abs(spec) > 1e-9)
    assert sorted(grid.mode_index[nz]) == [-3, 3]
    assert spec[nz[0]] == pytest.approx(np.conj(spec[nz[1]]))


def test_round_trip_and_hermitian():
    g = TorusGrid(1, 50.0, 4096)
    rng = np.random.default_rng(1)
    f = rng.standard_normal(g.shape)
    spec = forward(g, f)
    m = g.mode_index
    # c(-k) = conj(c(k)) for all non-Nyquist modes
    idx = {int(k): i for i, k in enumerate(m)}
    for k in range(1, g.N // 2):
        assert spec[idx[-k]] == pytest.approx(np.conj(spec[idx[k]]), abs=1e-9)
    back = inverse(g, spec)
    assert np.abs(back - f).max() / np.abs(f).max() < 1e-12


def test_fractional_laplacian_eigen(grid):
    x = grid.axis
    f = np.sin(2 * x)
    for order in (1 / 3, 0.5, 1.0, 1.7):
        out = inverse(grid, fractional_laplacian(grid, forward(grid, f), order))
        assert np.allclose(out, 2 ** (2 * order) * f, atol=1e-10 * 2 ** (2 * order))
    # sigma = 1, alpha = 1/3, k0 = 2
    out = inverse(grid, fractional_laplacian(grid, forward(grid, f), 1 / 3))
    assert out[np.argmax(f)] / f.max() == pytest.approx(1.5874010519681994, rel=1e-12)


def test_fractional_laplacian_constant(grid):
    spec = forward(grid, np.ones(grid.shape))
    assert np.abs(fractional_laplacian(grid, spec, 0.3)).max() == 0
    assert np.array_equal(fractional_laplacian(grid, spec, 0), spec)
    with pytest.raises(GridError):
        fractional_laplacian(grid, spec, -1)


def test_semigroup_and_second_derivative(grid):
    x = grid.axis
    f = np.exp(np.cos(x))
    spec = forward(grid, f)
    a = fractional_laplacian(grid, fractional_laplacian(grid, spec, 0.3), 0.45)
    b = fractional_laplacian(grid, spec, 0.75)
    assert np.allclose(a, b, rtol=1e-13, atol=1e-12)
    lap = inverse(grid, fractional_laplacian(grid, spec, 1.0))
    exact = -(np.sin(x) ** 2 - np.cos(x)) * f  # -f''
    assert np.abs(lap - exact).max() < 1e-10


def test_dealias(grid):
    rng = np.random.default_rng(2)
    spec = rng.standard_normal(grid.N) + 1j * rng.standard_normal(grid.N)
    assert np.array_equal(dealias(grid, spec, 1.0), spec)
    d = dealias(grid, spec)
    cut = (2 / 3) * grid.N / 2
    expected = sum(1 for m in grid.mode_index if abs(m) <= cut)
    assert np.count_nonzero(d) == expected
    assert np.array_equal(dealias(grid, d), d)
    assert np.linalg.norm(d) <= np.linalg.norm(spec)
    band = np.where(np.abs(grid.mode_index) <= 5, spec, 0)
    assert np.array_equal(dealias(grid, band), band)


def test_sobolev_norm(grid):
    x = grid.axis
    f = np.sin(3 * x)
    spec = forward(grid, f)
    l2 = lp_norm(grid, f, 2)
    assert sobolev_norm(grid, spec, 0) == pytest.approx(l2, rel=1e-12)
    assert sobolev_norm(grid, spec, 0.8) == pytest.approx(3 ** 0.8 * l2, rel=1e-12)


def test_sobolev_gaussian_refinement():
    vals = []
    for N in (256, 512):
        g = TorusGrid(1, 40.0, N)
        vals.append(sobolev_norm(g, forward(g, np.exp(-g.axis ** 2)), 1.0))
    # the H^1 seminorm of exp(-x^2) is the L2 norm of its derivative
    exact = (math.pi / 2) ** 0.25
    assert abs(vals[0] - vals[1]) / vals[1] < 1e-6
    assert vals[1] == pytest.approx(exact, rel=1e-10)


def test_lp_norms(grid):
    f = np.ones(grid.shape)
    assert lp_norm(grid, f, 1) == pytest.approx(grid.L)
    assert lp_norm(grid, f, np.inf) == 1
    assert lp_norm(grid, f, 2) == pytest.approx(math.sqrt(grid.L))


def test_two_d_grid():
    g = TorusGrid(2, 20.0, 32)
    X, Y = g.coords()
    f = np.exp(-(X ** 2 + Y ** 2))
    spec = forward(g, f)
    assert sobolev_norm(g, spec) == pytest.approx(lp_norm(g, f), rel=1e-12)
    assert np.allclose(inverse(g, spec), f, atol=1e-14)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 20), st.floats(0, 2))
def test_multiplier_on_modes(k, order):
    g = TorusGrid(1, 2 * math.pi, 64)
    f = np.cos(k * g.axis)
    out = inverse(g, fractional_laplacian(g, forward(g, f), order))
    assert np.allclose(out, k ** (2 * order) * f, atol=1e-9 * max(1, k ** (2 * order)))
