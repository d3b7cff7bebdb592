"""Linear evolution: torus propagation, radial-quadrature norms on R^n,
asymptotic profiles, refined differences, Gevrey slope and instability rate.

Frequency-side norms on R^n use Plancherel with the transform
v_hat(xi) = integral v(x) e^{-i x.xi} dx, so that

    ||v||_{H^s}^2 = (2 pi)^{-n} c_n integral_0^inf r^{2s+n-1} |v_hat(r)|^2 dr,

with c_n = 2 pi^{n/2} / Gamma(n/2) continued to real n.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy.special import gammaln

from . import spectral
from .kernels import kernel_values, scaled_roots
from .model import RegimeError
from .quadrature import radial_integral
from .spectral import TorusGrid


class InstabilityError(RuntimeError):
    """Requested evolution would amplify roundoff beyond the allowed growth."""


# -- radial data ----------------------------------------------------------

@dataclass(frozen=True)
class Gaussian:
    """v_hat(r) = P exp(-a r^2); physical profile P (4 pi a)^(-n/2) exp(-|x|^2 / (4a))."""

    a: float = 1.0
    P: float = 1.0

    def fhat(self, r: np.ndarray) -> np.ndarray:
        return self.P * np.exp(-self.a * np.asarray(r) ** 2)

    def physical(self, radius: np.ndarray, n: float) -> np.ndarray:
        return self.P * (4 * np.pi * self.a) ** (-n / 2) * np.exp(-radius ** 2 / (4 * self.a))

    def cutoff(self, alpha: float, tol: float = 1e-17) -> float:
        """Radius beyond which r^alpha |v_hat|^2 is below tol times its peak."""
        rs = np.linspace(0.0, 60.0 / math.sqrt(self.a) + 1.0, 20001)[1:]
        logs = alpha * np.log(rs) - 2 * self.a * rs ** 2
        peak = logs.max()
        above = np.nonzero(logs > peak + math.log(tol))[0]
        return float(rs[above[-1] + 1]) if above.size else float(rs[-1])


@dataclass(frozen=True)
class GaussianLaplacian:
    """Mean-zero data v_hat(r) = P a r^2 exp(-a r^2) (minus a scaled Laplacian of a Gaussian)."""

    a: float = 1.0
    P: float = 1.0

    def fhat(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r)
        return self.P * self.a * r ** 2 * np.exp(-self.a * r ** 2)

    def physical(self, radius: np.ndarray, n: float) -> np.ndarray:
        g = (4 * np.pi * self.a) ** (-n / 2) * np.exp(-radius ** 2 / (4 * self.a))
        # -a Delta g = a * g * (n / (2a) - |x|^2 / (4 a^2))
        return self.P * g * (n / 2 - radius ** 2 / (4 * self.a))

    def cutoff(self, alpha: float, tol: float = 1e-17) -> float:
        return Gaussian(self.a, self.P).cutoff(alpha + 4, tol)


@dataclass(frozen=True)
class RadialBump:
    """Tabulated radial transform, linearly interpolated and zero beyond the table."""

    r: Tuple[float, ...]
    values: Tuple[float, ...]

    def fhat(self, r: np.ndarray) -> np.ndarray:
        return np.interp(np.asarray(r), self.r, self.values, right=0.0)

    def cutoff(self, alpha: float, tol: float = 1e-17) -> float:
        return float(self.r[-1])


@dataclass(frozen=True)
class DataTriple:
    v0: Optional[object] = None
    v1: Optional[object] = None
    v2: Optional[object] = None

    def slots(self):
        return (self.v0, self.v1, self.v2)

    def fhat(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r, dtype=float)
        return np.stack([np.zeros_like(r) if d is None else d.fhat(r) for d in self.slots()])

    def cutoff(self, alpha: float) -> float:
        cuts = [d.cutoff(alpha) for d in self.slots() if d is not None]
        return max(cuts) if cuts else 1.0

    @property
    def is_zero(self) -> bool:
        return all(d is None for d in self.slots())


def sphere_area(n: float) -> float:
    """Surface area of the unit sphere in R^n, continued to real n."""
    return math.exp(math.log(2.0) + 0.5 * n * math.log(math.pi) - gammaln(0.5 * n))


def plancherel_constant(n: float) -> float:
    return sphere_area(n) / (2 * math.pi) ** n


# -- profiles -------------------------------------------------------------

class ProfileKind(enum.Enum):
    W13 = "w13"
    W3 = "w3"
    W3inf = "w3inf"


def profile_kind_for(eta: float) -> ProfileKind:
    if 1 < eta < 3:
        return ProfileKind.W13
    if eta == 3:
        return ProfileKind.W3
    if eta > 3:
        return ProfileKind.W3inf
    raise RegimeError("no asymptotic profile for eta <= 1")


def _check_kind(kind: ProfileKind, eta: float) -> None:
    expected = profile_kind_for(eta)
    if kind is not expected:
        raise RegimeError(f"profile {kind.name} does not match eta = {eta} ({expected.name})")


def _k2_series(tau: np.ndarray, eta: float, terms: int = 40) -> np.ndarray:
    """K_2 / t^2 as a Taylor series in tau (used only where tau is small).

    The scaled kernel g(tau) = sum g_k tau^k solves g''' + eta g'' + eta g' + g = 0
    with g(0) = g'(0) = 0, g''(0) = 1; the returned value is g(tau) / tau^2.
    """
    g = np.zeros(terms)
    g[2] = 0.5
    for k in range(terms - 3):
        g[k + 3] = -(eta * g[k + 2] * (k + 2) * (k + 1) + eta * g[k + 1] * (k + 1) + g[k]) / (
            (k + 3) * (k + 2) * (k + 1))
    return np.polynomial.polynomial.polyval(tau, g[2:])


def profile_multiplier(kind: ProfileKind, t: float, r: np.ndarray, sigma: float,
                       eta: float) -> np.ndarray:
    """Fourier multiplier acting on v_hat_2 that defines the asymptotic profile.

    Closed forms:
      W13:   rho^-2 [(-e^{-tau} + cos(C tau) e^{-(eta-1) tau/2}) / (eta - 3)
                     + sin(C tau) e^{-(eta-1) tau/2} / (2C)]
      W3inf: rho^-2 [e^{-tau} / (3 - eta) + e^{(1-eta) tau/2} / D
                     * (e^{D tau} / (3 - eta + 2D) - e^{-D tau} / (3 - eta - 2D))]
      W3:    (t^2 / 2) e^{-tau}
    with rho = r^(2 sigma/3), tau = rho t.  Where tau < 0.05 the closed forms
    cancel catastrophically and a Taylor series in tau is used instead.
    """
    _check_kind(kind, eta)
    r = np.asarray(r, dtype=float)
    rho = r ** (2.0 * sigma / 3.0)
    tau = rho * t
    if kind is ProfileKind.W3:
        return 0.5 * t * t * np.exp(-tau)
    small = tau < 0.05
    out = np.empty_like(tau)
    out[small] = t * t * _k2_series(tau[small], eta)
    tb, rb = tau[~small], rho[~small]
    if kind is ProfileKind.W13:
        C = 0.5 * math.sqrt(3.0 + 2.0 * eta - eta * eta)
        damp = np.exp(-0.5 * (eta - 1.0) * tb)
        val = (-np.exp(-tb) + np.cos(C * tb) * damp) / (eta - 3.0) + np.sin(C * tb) * damp / (2 * C)
    else:
        D = 0.5 * math.sqrt(eta * eta - 2.0 * eta - 3.0)
        base = np.exp(0.5 * (1.0 - eta) * tb)
        val = np.exp(-tb) / (3.0 - eta) + base / D * (
            np.exp(D * tb) / (3.0 - eta + 2 * D) - np.exp(-D * tb) / (3.0 - eta - 2 * D))
    out[~small] = val / rb ** 2
    return out


# -- torus evolution ------------------------------------------------------

def evolve_linear_torus(grid: TorusGrid, data: Sequence[np.ndarray], t: float, sigma: float,
                        eta: float, max_growth: float = 1e8) -> np.ndarray:
    """Physical field at time t from the data triple (u0, u1, u2) on the torus."""
    if eta < 1:
        growth = 2 * max(scaled_roots(eta).real.max(), 0.0)
        top = float(grid.kmag.max()) ** (2.0 * sigma / 3.0)
        if growth * top * t > math.log(max_growth):
            raise InstabilityError(
                f"eta = {eta} < 1: modes grow by more than {max_growth:g} before t = {t}")
    specs = [spectral.forward(grid, np.asarray(d, dtype=float)) for d in data]
    kv = kernel_values(t, grid.kmag, sigma, eta, order=0)
    out = kv.K0 * specs[0] + kv.K1 * specs[1] + kv.K2 * specs[2]
    return spectral.inverse(grid, out)


# -- radial norms ---------------------------------------------------------

def _solution_hat(data: DataTriple, t: float, r: np.ndarray, sigma: float, eta: float,
                  subtract: Optional[ProfileKind] = None) -> np.ndarray:
    fh = data.fhat(r)
    kv = kernel_values(t, r, sigma, eta, order=0)
    k2 = kv.K2
    if subtract is not None:
        k2 = k2 - profile_multiplier(subtract, t, r, sigma, eta)
    return kv.K0 * fh[0] + kv.K1 * fh[1] + k2 * fh[2]


def _norm_from_hat(hat: Callable[[np.ndarray], np.ndarray], s: float, n: float, sigma: float,
                   t: float, cutoff: float, rtol: float, atol: float = 0.0) -> float:
    alpha = 2.0 * s + n - 1.0
    val = radial_integral(lambda r: np.abs(hat(r)) ** 2, alpha, sigma, t_scale=max(t, 1.0),
                          r_max=cutoff, rtol=rtol, atol=atol)
    return math.sqrt(max(float(val), 0.0) * plancherel_constant(n))


def radial_norm(data: DataTriple, t: float, s: float, sigma: float, eta: float, n: float,
                rtol: float = 1e-10) -> float:
    """H^s norm on R^n of the linear solution at time t (frequency quadrature)."""
    if s < 0:
        raise ValueError("s must be non-negative")
    if data.is_zero:
        return 0.0
    cut = data.cutoff(2 * s + n - 1)
    return _norm_from_hat(lambda r: _solution_hat(data, t, r, sigma, eta), s, n, sigma, t, cut, rtol)


def profile_norm(data: DataTriple, t: float, s: float, kind: ProfileKind, sigma: float,
                 eta: float, n: float, rtol: float = 1e-10) -> float:
    _check_kind(kind, eta)
    if data.v2 is None:
        return 0.0
    cut = data.v2.cutoff(2 * s + n - 1)
    hat = lambda r: profile_multiplier(kind, t, r, sigma, eta) * data.v2.fhat(r)
    return _norm_from_hat(hat, s, n, sigma, t, cut, rtol)


def refined_difference_norm(data: DataTriple, t: float, s: float, sigma: float, eta: float,
                            n: float, kind: Optional[ProfileKind] = None,
                            rtol: float = 1e-10) -> float:
    """H^s norm of v - w with w the asymptotic profile of the regime."""
    kind = kind or profile_kind_for(eta)
    _check_kind(kind, eta)
    if data.is_zero:
        return 0.0
    cut = data.cutoff(2 * s + n - 1)
    # the difference can vanish identically (v2-only data), so tolerances are
    # measured against the solution itself
    scale = radial_norm(data, t, s, sigma, eta, n, rtol=1e-6)
    return _norm_from_hat(lambda r: _solution_hat(data, t, r, sigma, eta, subtract=kind),
                          s, n, sigma, t, cut, rtol, atol=(1e-6 * rtol) * scale ** 2)


@dataclass
class NormSeries:
    times: np.ndarray
    values: np.ndarray
    s: float = 0.0
    method: str = "radial-quadrature"
    label: str = ""

    def __post_init__(self) -> None:
        self.times = np.asarray(self.times, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")
        if np.any(self.values < 0):
            raise ValueError("norm values must be non-negative")


def log_times(t_min: float, t_max: float, per_decade: int = 8) -> np.ndarray:
    decades = math.log10(t_max / t_min)
    count = max(int(math.ceil(decades * per_decade)) + 1, 4)
    return np.geomspace(t_min, t_max, count)


def norm_series(data: DataTriple, times: Sequence[float], s: float, sigma: float, eta: float,
                n: float, subtract: bool = False, rtol: float = 1e-10) -> NormSeries:
    f = refined_difference_norm if subtract else radial_norm
    vals = [f(data, float(t), s, sigma, eta, n, rtol=rtol) for t in times]
    return NormSeries(np.asarray(times), np.asarray(vals), s,
                      label=("difference" if subtract else "solution"))


# -- Gevrey smoothing and instability ------------------------------------

def _state_amplitude(data: DataTriple, t: float, r: np.ndarray, sigma: float, eta: float) -> np.ndarray:
    """rho^2 |v| + rho |v_t| + |v_tt| normalised by the same weights of the data."""
    rho = r ** (2.0 * sigma / 3.0)
    fh = data.fhat(r)
    # only the direction of the data vector matters; where the data itself
    # has underflowed, fall back to the occupied slots
    weights = rho ** np.array([2.0, 1.0, 0.0])[:, None]
    ref = (weights * np.abs(fh)).sum(axis=0)
    lost = ~(ref > 1e-200)
    if np.any(lost):
        occupied = np.array([d is not None for d in data.slots()], dtype=float)
        fh = fh.copy()
        fh[:, lost] = occupied[:, None] / weights[:, lost]
    kv = kernel_values(t, r, sigma, eta, order=2)
    M = kv.M  # (m, i, j)
    state = np.einsum("mij,jm->im", M, fh)
    amp = rho ** 2 * np.abs(state[0]) + rho * np.abs(state[1]) + np.abs(state[2])
    return amp / (weights * np.abs(fh)).sum(axis=0)


def gevrey_slope(data: DataTriple, t: float, sigma: float, eta: float,
                 band: Optional[Tuple[float, float]] = None, samples: int = 200) -> float:
    """Fitted c in |v_hat(t, r)| ~ exp(-c r^(2 sigma/3) t) over a high-frequency band.

    The data profile is divided out, so only the kernel's smoothing is seen.
    The default band is rho in [10, 60] / t (rho in [1, 6] at t <= 1).
    """
    if t < 0:
        raise ValueError("t must be non-negative")
    if t == 0:
        return 0.0
    lo, hi = band if band is not None else (10.0 / max(t, 1.0), 60.0 / max(t, 1.0))
    rho = np.linspace(lo, hi, samples)
    r = rho ** (3.0 / (2.0 * sigma))
    amp = _state_amplitude(data, t, r, sigma, eta)
    if np.any(amp <= 0) or not np.all(np.isfinite(amp)):
        raise ValueError("under-resolved band: amplitude underflow")
    slope = np.polyfit(rho, -np.log(amp), 1)[0]
    return float(slope / t)


def mode_amplitude_history(r: float, sigma: float, eta: float, times: np.ndarray,
                           slot: int = 2) -> np.ndarray:
    """Single-mode solution v(t) for unit data in one slot."""
    kv = kernel_values(np.asarray(times, dtype=float), r, sigma, eta, order=0)
    return (kv.K0, kv.K1, kv.K2)[slot]


def instability_rate(r: float, sigma: float, eta: float, horizon: float = 100.0,
                     samples: int = 20001) -> float:
    """Log-slope of a single Fourier mode over [horizon/2, horizon].

    The slope is fitted through the local maxima of |v| when the mode
    oscillates (every such maximum sits at the same phase, so the fit is
    free of oscillation bias) and through log|v| otherwise.
    """
    t = np.linspace(0.5 * horizon, horizon, samples)
    v = np.abs(mode_amplitude_history(r, sigma, eta, t))
    interior = (v[1:-1] > v[:-2]) & (v[1:-1] >= v[2:])
    idx = np.nonzero(interior)[0] + 1
    if idx.size >= 3:
        # parabolic refinement of each peak in log space
        y0, y1, y2 = np.log(v[idx - 1]), np.log(v[idx]), np.log(v[idx + 1])
        denom = y0 - 2 * y1 + y2
        shift = np.where(denom != 0, 0.5 * (y0 - y2) / np.where(denom != 0, denom, 1), 0.0)
        dt = t[1] - t[0]
        tp = t[idx] + shift * dt
        yp = y1 - 0.25 * (y0 - y2) * shift
        return float(np.polyfit(tp, yp, 1)[0])
    return float(np.polyfit(t, np.log(v), 1)[0])


def bounded_amplitude_ratio(r: float, sigma: float, eta: float, horizon: float = 100.0,
                            samples: int = 20001) -> float:
    """sup over [0, horizon] of the weighted state amplitude for unit v2 data, divided by its initial value."""
    rho = r ** (2.0 * sigma / 3.0)
    t = np.linspace(0.0, horizon, samples)
    kv = kernel_values(t, r, sigma, eta, order=2)
    amp = rho ** 2 * np.abs(kv.K2) + rho * np.abs(kv.dK2) + np.abs(kv.ddK2)
    return float(amp.max() / amp[0])
