"""Test functions, blow-up functionals and the weak-form identity.

Cutoffs use the smooth step

    chi(tau) = f(1 - tau) / (f(1 - tau) + f(tau - 1/2)),   f(x) = exp(-1/x) (x > 0),

which equals 1 on [0, 1/2], decreases on (1/2, 1) and vanishes on [1, inf).
Its first three derivatives are evaluated in closed form.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import simpson, trapezoid
from scipy.special import betainc

from . import spectral
from .model import ModelParams, ParameterDomainError, conjugate
from .nonlinear import TrajectoryRecord
from .spectral import TorusGrid


class DomainTooSmallError(ValueError):
    """The torus cannot hold the test function's tail to the requested accuracy."""


class CoverageError(ValueError):
    """The trajectory does not cover the time range a functional needs."""


# -- smooth steps ---------------------------------------------------------

def _glue(x: np.ndarray, order: int) -> np.ndarray:
    """d^k/dx^k of exp(-1/x) for x > 0 (zero for x <= 1e-3, where it underflows)."""
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    pos = x > 1e-3
    y = 1.0 / x[pos]
    f = np.exp(-y)
    if order == 0:
        out[pos] = f
    elif order == 1:
        out[pos] = f * y ** 2
    elif order == 2:
        out[pos] = f * (y ** 4 - 2 * y ** 3)
    elif order == 3:
        out[pos] = f * (y ** 6 - 6 * y ** 5 + 6 * y ** 4)
    else:
        raise ValueError("order must be 0..3")
    return out


def smooth_step(tau, order: int = 0) -> np.ndarray:
    """k-th derivative (k = 0..3) of the cutoff chi at tau."""
    tau = np.asarray(tau, dtype=float)
    a = [(-1) ** k * _glue(1.0 - tau, k) for k in range(order + 1)]
    b = [_glue(tau - 0.5, k) for k in range(order + 1)]
    s = [ak + bk for ak, bk in zip(a, b)]
    # s > 0 everywhere since f(1 - tau) > 0 for tau < 1 and f(tau - 1/2) > 0 for tau > 1/2
    s0 = s[0]
    if order == 0:
        return a[0] / s0  # exactly 1 on the plateau
    w = [1.0 / s0]
    if order >= 1:
        w.append(-s[1] / s0 ** 2)
    if order >= 2:
        w.append(-s[2] / s0 ** 2 + 2 * s[1] ** 2 / s0 ** 3)
    if order >= 3:
        w.append(-s[3] / s0 ** 2 + 6 * s[1] * s[2] / s0 ** 3 - 6 * s[1] ** 3 / s0 ** 4)
    binom = [[1], [1, 1], [1, 2, 1], [1, 3, 3, 1]][order]
    return sum(c * a[j] * w[order - j] for j, c in enumerate(binom))


def smooth_step_star(tau, order: int = 0) -> np.ndarray:
    """chi*: zero for tau < 1/2, chi otherwise."""
    tau = np.asarray(tau, dtype=float)
    return np.where(tau < 0.5, 0.0, smooth_step(tau, order))


def power_derivatives(chi: Sequence[np.ndarray], m: float, scale: float = 1.0) -> List[np.ndarray]:
    """Time derivatives 0..3 of chi(tau)^m when d tau / dt = scale."""
    c0 = chi[0]
    out = [c0 ** m]
    if len(chi) > 1:
        c1 = chi[1] * scale
        out.append(m * c0 ** (m - 1) * c1)
    if len(chi) > 2:
        c2 = chi[2] * scale ** 2
        out.append(m * (m - 1) * c0 ** (m - 2) * c1 ** 2 + m * c0 ** (m - 1) * c2)
    if len(chi) > 3:
        c3 = chi[3] * scale ** 3
        out.append(m * (m - 1) * (m - 2) * c0 ** (m - 3) * c1 ** 3
                   + 3 * m * (m - 1) * c0 ** (m - 2) * c1 * c2 + m * c0 ** (m - 1) * c3)
    return out


# -- parameters -----------------------------------------------------------

def default_m(n: float, sigma: float) -> int:
    return int(math.ceil(max(2 * sigma, n + 2 * sigma / 3))) + 1


@dataclass(frozen=True)
class TestFunctionParams:
    R: float
    n: float = 1.0
    sigma: float = 1.0
    K: float = 1.0
    m: Optional[float] = None
    s_sigma: float = 0.5

    __test__ = False  # not a pytest class

    def __post_init__(self) -> None:
        if not self.R > 0:
            raise ParameterDomainError("R must be positive")
        if self.K < 1:
            raise ParameterDomainError("K must be at least 1")
        if self.m is None:
            object.__setattr__(self, "m", default_m(self.n, self.sigma))
        if not self.m > 2 * self.sigma:
            raise ParameterDomainError("m must exceed 2 sigma")
        frac = self.sigma - math.floor(self.sigma)
        upper = 1.0 if frac == 0 else frac
        if not 0 < self.s_sigma < upper:
            raise ParameterDomainError(f"s_sigma must lie in (0, {upper})")

    @property
    def q(self) -> float:
        return self.n + 2 * self.s_sigma

    @property
    def critical_ok(self) -> bool:
        return self.m > self.n + 2 * self.sigma / 3


def phi_R(x, tp: TestFunctionParams) -> np.ndarray:
    """<x / (R K)>^(-n - 2 s_sigma); ``x`` is |x| or an array of radii."""
    y = np.asarray(x, dtype=float) / (tp.R * tp.K)
    return (1.0 + y * y) ** (-0.5 * tp.q)


def zeta_R(t, tp: TestFunctionParams, order: int = 0) -> np.ndarray:
    """zeta(R^(-2 sigma/3) t) and its t-derivatives."""
    scale = tp.R ** (-2.0 * tp.sigma / 3.0)
    return smooth_step(np.asarray(t, dtype=float) * scale, order) * scale ** order


def _tau(t, radius, tp: TestFunctionParams) -> np.ndarray:
    return (np.asarray(t, dtype=float) + np.asarray(radius, dtype=float) ** (2.0 * tp.sigma / 3.0)) / tp.R


def psi_R(t, radius, tp: TestFunctionParams, order: int = 0) -> np.ndarray:
    """[chi((t + |x|^(2 sigma/3)) / R)]^m, or its ``order``-th time derivative."""
    tau = _tau(t, radius, tp)
    chi = [smooth_step(tau, k) for k in range(order + 1)]
    return power_derivatives(chi, tp.m, 1.0 / tp.R)[order]


def psi_star_R(t, radius, tp: TestFunctionParams) -> np.ndarray:
    return smooth_step_star(_tau(t, radius, tp)) ** tp.m


# -- fractional Laplacian identities--------------------------------------

def _bracket_tail_fraction(q: float, n: int, a: float) -> float:
    """Share of integral <x>^(-q) dx over R^n lying in |x| > a.

    With w = 1 / (1 + r^2) the radial integral becomes an incomplete beta
    function, so the share is I_{1/(1+a^2)}((q - n)/2, n/2).
    """
    return float(betainc(0.5 * (q - n), 0.5 * n, 1.0 / (1.0 + a * a)))


def _frac_lap_1d(values: np.ndarray, dx: float, gamma: float) -> np.ndarray:
    k = 2 * np.pi * np.fft.fftfreq(values.size, d=dx)
    return np.fft.ifft(np.abs(k) ** (2 * gamma) * np.fft.fft(values)).real


def frac_lap_scaling_check(gamma: float, R: float, grid: TorusGrid, q: float = 3.0,
                           tail_tol: float = 1e-8, max_extension: int = 256) -> float:
    """Max deviation between (-Delta)^gamma phi_R and R^(-2 gamma) ((-Delta)^gamma phi)(x / R).

    Both sides are computed spectrally with the grid's spacing.  Because
    <x>^(-q) has algebraic tails, the periodic images of a torus of length L
    perturb fractional powers at the 1e-5 level; the evaluation torus is
    therefore extended (same spacing, length a power of two times L) until the
    mass of phi_R beyond its half-length is below ``tail_tol``.  The deviation
    is taken over the inner half of the original grid at points whose
    preimage x / R is a grid node.
    """
    if gamma < 0:
        raise ValueError("gamma must be non-negative")
    if grid.n != 1:
        raise DomainTooSmallError("the scaling check is implemented on 1-D grids")
    ext = 1
    while _bracket_tail_fraction(q, 1, ext * grid.L / (2 * R)) > tail_tol:
        ext *= 2
        if ext > max_extension:
            raise DomainTooSmallError(
                f"tail mass of phi_R exceeds {tail_tol:g} even on a torus {max_extension} L long")
    N = grid.N * ext
    dx = grid.dx
    x = -N // 2 * dx + dx * np.arange(N)
    centre = N // 2
    lhs = _frac_lap_1d((1 + (x / R) ** 2) ** (-q / 2), dx, gamma)
    base = _frac_lap_1d((1 + x ** 2) ** (-q / 2), dx, gamma)
    idx = np.arange(N) - centre
    inner = np.abs(x) <= grid.L / 4
    # x_i / R = (i / R) dx must be a node
    ratio = idx / R
    node = np.abs(ratio - np.round(ratio)) < 1e-9
    sel = inner & node
    rhs = R ** (-2 * gamma) * base[centre + np.round(ratio[sel]).astype(int)]
    return float(np.abs(lhs[sel] - rhs).max())


def lemma61_exponent(sigma: float, q: float, n: int) -> float:
    """q_sigma = q + 2 sigma for integer sigma, n + 2 (sigma - [sigma]) otherwise."""
    frac = sigma - math.floor(sigma)
    return q + 2 * sigma if frac == 0 else n + 2 * frac


def lemma61_bound_check(sigma: float, q: float, grid: TorusGrid, window: Optional[Tuple[float, float]] = None,
                        tol: float = 0.2) -> Tuple[float, bool]:
    """Fitted decay exponent of |(-Delta)^sigma <x>^(-q)| and whether it reaches q_sigma - tol.

    The fit runs over log-spaced radii in ``window`` (default [5, L/10]) on
    log <x>, which removes most of the pre-asymptotic curvature.
    """
    if not q > grid.n:
        raise ParameterDomainError("q > n required")
    if _bracket_tail_fraction(q, grid.n, grid.L / 2) > 1e-3:
        raise DomainTooSmallError("torus too small for the decay fit")
    phi = grid.sample(lambda *c: (1 + sum(ci * ci for ci in c)) ** (-q / 2))
    val = spectral.inverse(grid, spectral.fractional_laplacian(grid, spectral.forward(grid, phi), sigma))
    lo, hi = window or (5.0, grid.L / 10)
    if grid.n == 1:
        xs, vs = grid.axis, val
    else:
        mid = grid.N // 2
        xs, vs = grid.axis, val[:, mid]
    mask = (xs >= lo) & (xs <= hi) & (np.abs(vs) > 0)
    x, v = xs[mask], np.abs(vs[mask])
    # thin to a log-uniform sample
    pick = np.unique(np.searchsorted(x, np.geomspace(x[0], x[-1], 40)).clip(0, x.size - 1))
    slope = np.polyfit(np.log(np.sqrt(1 + x[pick] ** 2)), np.log(v[pick]), 1)[0]
    exponent = float(-slope)
    return exponent, bool(exponent >= lemma61_exponent(sigma, q, grid.n) - tol)


# -- trajectories ---------------------------------------------------------

@dataclass
class FieldHistory:
    """Physical fields u, u_t, u_tt on a grid at increasing times (arrays of shape (nt,) + grid)."""

    grid: TorusGrid
    times: np.ndarray
    u: np.ndarray
    ut: Optional[np.ndarray] = None
    utt: Optional[np.ndarray] = None

    @classmethod
    def from_record(cls, record: TrajectoryRecord, grid: TorusGrid) -> "FieldHistory":
        if not record.stored:
            raise CoverageError("trajectory has no stored fields (set store_every > 0)")
        times = np.array([s.t for s in record.stored])
        u = np.stack([spectral.inverse(grid, s.u) for s in record.stored])
        ut = np.stack([spectral.inverse(grid, s.ut) for s in record.stored])
        utt = np.stack([spectral.inverse(grid, s.utt) for s in record.stored])
        return cls(grid, times, u, ut, utt)


def _space_integral(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    axes = tuple(range(values.ndim - grid.n, values.ndim))
    return values.sum(axis=axes) * grid.cell_volume


def _time_integral(times: np.ndarray, values: np.ndarray) -> float:
    if times.size < 3:
        return float(trapezoid(values, times)) if times.size == 2 else 0.0
    return float(simpson(values, x=times))


def _apply_power(grid: TorusGrid, values: np.ndarray, order: float) -> np.ndarray:
    """(-Delta)^order on each time slice."""
    if order == 0:
        return values
    axes = tuple(range(values.ndim - grid.n, values.ndim))
    mult = grid.kmag ** (2 * order)
    return np.fft.ifftn(mult * np.fft.fftn(values, axes=axes), axes=axes).real


def I_R(history: FieldHistory, tp: TestFunctionParams, params: ModelParams) -> float:
    """integral of |u|^p phi_R zeta_R over the trajectory; needs t up to R^(2 sigma/3)."""
    t_end = tp.R ** (2.0 * tp.sigma / 3.0)
    if history.times[-1] < t_end * (1 - 1e-9):
        raise CoverageError(f"trajectory ends at {history.times[-1]:g} < R^(2 sigma/3) = {t_end:g}")
    phi = phi_R(history.grid.radius, tp)
    z = zeta_R(history.times, tp)
    inner = _space_integral(history.grid, np.abs(history.u) ** float(params.p) * phi)
    return _time_integral(history.times, inner * z)


def y_p(r: float, history: FieldHistory, tp: TestFunctionParams, params: ModelParams) -> float:
    p = float(params.p)
    sub = TestFunctionParams(r, tp.n, tp.sigma, tp.K, tp.m, tp.s_sigma)
    tau = _tau(history.times[:, None] if history.grid.n == 1 else history.times[:, None, None],
               history.grid.radius[None], sub)
    weight = smooth_step_star(tau) ** ((tp.m - 2 * tp.sigma) * p)
    inner = _space_integral(history.grid, np.abs(history.u) ** p * weight)
    return _time_integral(history.times, inner)


def Y_p(R: float, history: FieldHistory, tp: TestFunctionParams, params: ModelParams,
        points: int = 48, r_min_ratio: float = 1e-3) -> float:
    """integral_0^R y_p(r) dr / r on a geometric r-grid (trapezoid in log r).

    The contribution of (0, r_min) is dropped; y_p(r) vanishes like a power of
    r there.
    """
    if R <= 0:
        return 0.0
    rs = np.geomspace(R * r_min_ratio, R, points)
    ys = np.array([y_p(r, history, tp, params) for r in rs])
    return float(trapezoid(ys, np.log(rs)))


def psi_weighted_nonlinearity(history: FieldHistory, tp: TestFunctionParams, params: ModelParams) -> float:
    """integral of |u|^p psi_R over the trajectory."""
    g = history.grid
    tau_t = history.times.reshape((-1,) + (1,) * g.n)
    psi = psi_R(tau_t, g.radius[None], tp)
    inner = _space_integral(g, np.abs(history.u) ** float(params.p) * psi)
    return _time_integral(history.times, inner)


# -- weak identity --------------------------------------------------------

@dataclass
class WeakFormTerms:
    nonlinear: float
    bulk: float
    boundary_end: float
    boundary_start: float
    components: Tuple[float, float, float, float]
    residual: float
    normalised: float


def _test_function_fields(kind: str, tp: TestFunctionParams, grid: TorusGrid, times: np.ndarray):
    """psi and its time derivatives 0..3 as arrays (nt,) + grid.shape."""
    shape = (-1,) + (1,) * grid.n
    t = times.reshape(shape)
    if kind == "psi":
        tau = _tau(t, grid.radius[None], tp)
        chi = [smooth_step(tau, k) for k in range(4)]
        return power_derivatives(chi, tp.m, 1.0 / tp.R)
    if kind == "phi_zeta":
        phi = phi_R(grid.radius, tp)[None]
        return [zeta_R(t, tp, k) * phi for k in range(4)]
    raise ValueError("kind must be 'psi' or 'phi_zeta'")


def weak_form_residual(history: FieldHistory, tp: TestFunctionParams, params: ModelParams,
                       nonlinearity: float = 1.0, kind: str = "psi") -> WeakFormTerms:
    """Residual of the weak identity on [0, T] for a smooth stored trajectory.

    integral_0^T integral |u|^p psi = integral_0^T integral u L* psi + B(T) - B(0), with
      L* = -d_t^3 + A + eta A^(1/3) d_t^2 - eta A^(2/3) d_t,
      B  = integral [u_tt psi - u_t psi_t + u psi_tt
                     + eta (u_t A^(1/3) psi - u A^(1/3) psi_t) + eta u A^(2/3) psi].
    Time derivatives of psi are analytic, fractional powers spectral.  The
    residual is divided by the largest individual term.
    """
    if history.ut is None or history.utt is None:
        raise CoverageError("u_t and u_tt are required")
    if history.times.size < 5:
        raise CoverageError("trajectory under-sampled in t")
    g = history.grid
    sigma, eta, p = float(params.sigma), float(params.eta), float(params.p)
    psi = _test_function_fields(kind, tp, g, history.times)
    A = lambda f, a: _apply_power(g, f, a * sigma)
    u, ut, utt = history.u, history.ut, history.utt
    S = lambda f: _space_integral(g, f)
    T = lambda f: _time_integral(history.times, S(f))
    comps = (-T(u * psi[3]), T(u * A(psi[0], 1.0)), eta * T(u * A(psi[2], 1.0 / 3.0)),
             -eta * T(u * A(psi[1], 2.0 / 3.0)))
    bulk = float(sum(comps))
    a13_psi = A(psi[0], 1.0 / 3.0)
    a13_psit = A(psi[1], 1.0 / 3.0)
    a23_psi = A(psi[0], 2.0 / 3.0)
    B = S(utt * psi[0] - ut * psi[1] + u * psi[2]
          + eta * (ut * a13_psi - u * a13_psit) + eta * u * a23_psi)
    nonlin = nonlinearity * T(np.abs(u) ** p * psi[0])
    residual = nonlin - (bulk + B[-1] - B[0])
    scale = max([abs(nonlin), abs(B[-1]), abs(B[0])] + [abs(c) for c in comps] + [1e-300])
    return WeakFormTerms(nonlin, bulk, float(B[-1]), float(B[0]), tuple(float(c) for c in comps),
                         float(residual), float(abs(residual) / scale))


# -- blow-up chain --------------------------------------------------------

def chain_exponent(n: float, sigma: float, p: float) -> float:
    return (3 * n + 2 * sigma) / (3 * float(conjugate(p))) - 2 * sigma


def data_term(grid: TorusGrid, data: Sequence[np.ndarray], tp: TestFunctionParams,
              params: ModelParams) -> float:
    """eps integral (eta u0 A^(2/3) phi_R + eta u1 A^(1/3) phi_R + u2 phi_R)."""
    sigma, eta = float(params.sigma), float(params.eta)
    phi = phi_R(grid.radius, tp)
    a23 = _apply_power(grid, phi, 2 * sigma / 3)
    a13 = _apply_power(grid, phi, sigma / 3)
    u0, u1, u2 = (np.asarray(d, dtype=float) for d in data)
    return float(params.epsilon) * float(S_sum(grid, eta * u0 * a23 + eta * u1 * a13 + u2 * phi))


def S_sum(grid: TorusGrid, values: np.ndarray) -> float:
    return float(values.sum() * grid.cell_volume)


def chain_constant(history: FieldHistory, data: Sequence[np.ndarray], tp: TestFunctionParams,
                   params: ModelParams) -> Tuple[float, float, float]:
    """(C, I_R, rhs) with data term + I_R = C * rhs and rhs = R^(exponent) I_R^(1/p)."""
    I = I_R(history, tp, params)
    rhs = tp.R ** chain_exponent(float(params.n), float(params.sigma), float(params.p)) \
        * I ** (1.0 / float(params.p))
    lhs = data_term(history.grid, data, tp, params) + I
    C = lhs / rhs if rhs > 0 else math.inf
    return C, I, rhs


@dataclass
class FunctionalValues:
    R: float
    K: float
    m: float
    I_R: float
    Y_p: float
    weak_residual: float
    rhs_bound: float
    chain_constant: float
    notes: List[str] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.I_R < 0 or self.Y_p < 0:
            raise ValueError("I_R and Y_p are non-negative")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


def sigma_note(sigma: float) -> List[str]:
    if float(sigma) % 3 != 0:
        return ["sigma not in 3N: outside the hypotheses of the critical lifespan argument"]
    return []
