"""Quadrature oracles for the decay lemmas, rate fitting and sharpness checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional, Tuple

import numpy as np

from .model import ParameterDomainError, RegimeError
from .propagator import NormSeries
from .quadrature import radial_integral


class HypothesisError(RegimeError):
    """Parameters violate the integrability hypothesis of a decay lemma."""


@dataclass(frozen=True)
class DecayFit:
    slope: float
    intercept: float
    rms_residual: float
    window: Tuple[float, float]
    samples: int
    curved: bool = False

    def __post_init__(self) -> None:
        if not self.window[0] < self.window[1]:
            raise ValueError("window must satisfy t_min < t_max")
        if self.samples < 4:
            raise ValueError("a fit needs at least 4 samples")


@dataclass
class LemmaCheckReport:
    lemma: str
    theoretical_rate: float
    fitted_rate: float
    c_lower: float
    c_upper: float
    passed: bool
    drift: float = float("nan")
    params: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["pass"] = d.pop("passed")
        return d


def _window_mask(times: np.ndarray, window: Optional[Tuple[float, float]]) -> np.ndarray:
    if window is None:
        return np.ones(times.shape, dtype=bool)
    lo, hi = window
    # tolerate roundoff in geometric grids
    return (times >= lo * (1 - 1e-12)) & (times <= hi * (1 + 1e-12))


def fit_rate(series: NormSeries, window: Optional[Tuple[float, float]] = None) -> DecayFit:
    """Least-squares slope of log(value) against log(t).

    A fit is flagged ``curved`` when its residual is not negligible and a
    quadratic in log t explains the data markedly better; that pattern marks
    logarithmic rather than power-law behaviour.
    """
    mask = _window_mask(series.times, window)
    t, v = series.times[mask], series.values[mask]
    if t.size < 4:
        raise ValueError(f"need at least 4 samples in the window, got {t.size}")
    if np.any(v <= 0):
        raise ValueError("non-positive values in the fit window")
    x, y = np.log(t), np.log(v)
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    rms = float(np.sqrt(np.mean((np.polyval(coef, x) - y) ** 2)))
    curved = False
    if rms > 5e-3 and t.size >= 5:
        q = np.polyfit(x, y, 2)
        rms_q = float(np.sqrt(np.mean((np.polyval(q, x) - y) ** 2)))
        curved = rms_q < rms / 4
    return DecayFit(float(coef[0]), float(coef[1]), rms, (float(t[0]), float(t[-1])), int(t.size), curved)


def _loglog_interp(series: NormSeries, t: float) -> float:
    return float(np.exp(np.interp(math.log(t), np.log(series.times), np.log(series.values))))


def sharpness_check(series: NormSeries, theoretical_rate: float,
                    window: Optional[Tuple[float, float]] = None, bound: float = 10.0,
                    drift_tol: float = 0.05, lemma: str = "sharpness") -> LemmaCheckReport:
    """Two-sided check of value(t) ~ t^rate (``theoretical_rate`` is the signed exponent).

    ratio(t) = value(t) t^(-rate) must stay within a factor ``bound`` over the
    window and change by less than ``drift_tol`` over its last decade.
    """
    mask = _window_mask(series.times, window)
    if not np.any(mask):
        raise ValueError("empty window")
    t, v = series.times[mask], series.values[mask]
    ratio = v * t ** (-theoretical_rate)
    lo, hi = float(ratio.min()), float(ratio.max())
    T = float(t[-1])
    t_back = max(T / 10.0, float(t[0]))
    r_back = _loglog_interp(series, t_back) * t_back ** (-theoretical_rate)
    drift = abs(ratio[-1] / r_back - 1.0) if r_back > 0 else float("inf")
    fitted = fit_rate(series, (float(t[0]), T)).slope if t.size >= 4 and t[0] < T else float("nan")
    passed = bool(lo > 0 and hi / lo < bound and drift < drift_tol)
    return LemmaCheckReport(lemma, float(theoretical_rate), fitted, lo, hi, passed, float(drift))


def lemma41_rate(s: float, n: float, sigma: float) -> float:
    """Signed decay exponent -3(2s + n)/(4 sigma) of the small-frequency decay integral."""
    return -3.0 * (2.0 * s + n) / (4.0 * sigma)


def lemma41_integral(s: float, n: float, sigma: float, c: float, t: float, eps0: float = 1.0,
                     rtol: float = 1e-11) -> float:
    """(integral_0^eps0 r^(2s+n-1) exp(-2c r^(2 sigma/3) t) dr)^(1/2)."""
    if not n > -2.0 * s:
        raise HypothesisError(f"n > -2s required (n = {n}, s = {s})")
    if c <= 0 or t < 0 or eps0 <= 0 or sigma <= 0:
        raise ParameterDomainError("need c > 0, t >= 0, eps0 > 0, sigma > 0")
    alpha = 2.0 * s + n - 1.0
    if t == 0:
        return math.sqrt(eps0 ** (alpha + 1.0) / (alpha + 1.0))
    scale = eps0 ** (2.0 * sigma / 3.0)
    # integrate on [0, 1] after r -> eps0 r so the graded rule sees unit range
    F = lambda r: np.exp(-2.0 * c * scale * r ** (2.0 * sigma / 3.0) * t)
    val = radial_integral(F, alpha, sigma, t_scale=scale * t, r_max=1.0, rtol=rtol)
    return math.sqrt(max(float(val), 0.0) * eps0 ** (alpha + 1.0))


def lemma42_rate(n: float, sigma: float) -> float:
    return -(3.0 * n - 8.0 * sigma) / (4.0 * sigma)


def lemma42_multipliers(r: np.ndarray, t: float, eta: float, sigma: float) -> Tuple[np.ndarray, np.ndarray]:
    """The two oscillatory multipliers, in a form free of cancellation at small tau.

    A1 = rho^-2 (e^{-tau} - cos(C tau) e^{-k tau})
       = rho^-2 e^{-k tau} (expm1(-(1 - k) tau) + 2 sin^2(C tau / 2)),
    A2 = rho^-2 sin(C tau) e^{-k tau},
    with rho = r^(2 sigma / 3), tau = rho t, k = (eta - 1)/2, C = sqrt(3 + 2 eta - eta^2)/2.
    """
    r = np.asarray(r, dtype=float)
    rho = r ** (2.0 * sigma / 3.0)
    tau = rho * t
    k = 0.5 * (eta - 1.0)
    C = 0.5 * math.sqrt(3.0 + 2.0 * eta - eta * eta)
    damp = np.exp(-k * tau)
    a1 = damp * (np.expm1(-(1.0 - k) * tau) + 2.0 * np.sin(0.5 * C * tau) ** 2) / rho ** 2
    a2 = damp * np.sin(C * tau) / rho ** 2
    return a1, a2


def lemma42_integrals(t: float, eta: float, n: float, sigma: float, eps0: float = 1.0,
                      rtol: float = 1e-10) -> Tuple[float, float]:
    """L^2 norms over |xi| < eps0 of the two multipliers (radial measure r^(n-1) dr)."""
    if not 1.0 < eta < 3.0:
        raise HypothesisError("eta must lie in (1, 3)")
    if not n > 4.0 * sigma / 3.0:
        raise HypothesisError(f"n > 4 sigma/3 required (n = {n}, sigma = {sigma})")
    if t == 0:
        return 0.0, 0.0

    def F(r):
        a1, a2 = lemma42_multipliers(r, t, eta, sigma)
        return np.stack([a1 * a1, a2 * a2])

    scale = eps0 ** (2.0 * sigma / 3.0)
    vals = radial_integral(lambda r: F(eps0 * r), n - 1.0, sigma, t_scale=scale * t, r_max=1.0,
                           rtol=rtol)
    vals = np.maximum(np.asarray(vals, dtype=float), 0.0) * eps0 ** n
    return float(math.sqrt(vals[0])), float(math.sqrt(vals[1]))


def lemma41_check(s: float, n: float, sigma: float, c: float = 1.0, t: float = 1e3,
                  eps0: float = 1.0, tol: float = 0.02) -> LemmaCheckReport:
    """value(4t)/value(t) against 4^rate once omega = eps0^(2 sigma/3) t is large."""
    rate = lemma41_rate(s, n, sigma)
    v1 = lemma41_integral(s, n, sigma, c, t, eps0)
    v4 = lemma41_integral(s, n, sigma, c, 4 * t, eps0)
    fitted = math.log(v4 / v1) / math.log(4.0)
    ratio = (v4 / v1) / 4.0 ** rate
    consts = sorted([v1 * t ** (-rate), v4 * (4 * t) ** (-rate)])
    return LemmaCheckReport("decay-integral-rate", rate, fitted, consts[0], consts[1], abs(ratio - 1) < tol,
                            params=dict(s=s, n=n, sigma=sigma, c=c, t=t, eps0=eps0))
