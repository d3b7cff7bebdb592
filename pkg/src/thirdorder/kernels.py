"""Characteristic roots and the three Fourier-space fundamental kernels.

The Fourier-transformed linear equation

    v''' + eta rho v'' + eta rho^2 v' + rho^3 v = 0,    rho = r^(2 sigma / 3),

has roots rho * lam with lam independent of r.  All kernels are therefore
functions of the dimensionless time tau = rho t, up to powers of rho:

    d^i/dt^i K_j (t, r) = rho^(i - j) G_ij(tau),
    G_ij(tau) = e[lam](s^i Q_j(s) e^(s tau)),

where e[lam] is the second divided difference over the three roots and
Q_2 = 1, Q_1 = s + eta, Q_0 = s^2 + eta s + eta.  K_2 itself is the
divided difference of e^(s t); the other two follow from it.

Divided differences are evaluated either by the partial-fraction sum over
well separated roots, or, near confluence and at small tau, by the
exponential of the bidiagonal (Opitz) matrix computed with a scaled Taylor
series and repeated squaring.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

THETA = 1e-3
TAU_SWITCH = 0.5
_TAYLOR_TOL = 1e-18


class Regime(enum.Enum):
    Oscillatory = "eta<3"
    Degenerate = "eta=3"
    RealDistinct = "eta>3"


def scaled_roots(eta: float) -> np.ndarray:
    """Roots of s^3 + eta s^2 + eta s + 1, ordered (lam1, lam2, lam3).

    lam1 = -1; lam2,3 = (1 - eta)/2 +- sqrt(eta^2 - 2 eta - 3)/2.
    """
    if not eta > 0:
        raise ValueError("eta must be positive")
    disc = (eta - 3.0) * (eta + 1.0)
    half = 0.5 * (1.0 - eta)
    if disc < 0:
        w = 0.5j * math.sqrt(-disc)
    else:
        w = 0.5 * math.sqrt(disc)
    return np.array([-1.0 + 0j, half + w, half - w], dtype=complex)


@dataclass(frozen=True)
class CharRoots:
    lambda1: complex
    lambda2: complex
    lambda3: complex
    regime: Regime
    rho: float
    mu_R: Optional[float] = None
    mu_I: Optional[float] = None
    C_eta: Optional[float] = None
    D_eta: Optional[float] = None

    @property
    def roots(self) -> np.ndarray:
        return np.array([self.lambda1, self.lambda2, self.lambda3])


def char_roots(eta: float, r: float, sigma: float) -> CharRoots:
    if r < 0:
        raise ValueError("r must be non-negative")
    rho = float(r) ** (2.0 * sigma / 3.0)
    lam = rho * scaled_roots(eta)
    if eta == 3:
        regime = Regime.Degenerate
    elif eta < 3:
        regime = Regime.Oscillatory
    else:
        regime = Regime.RealDistinct
    mu_R = mu_I = C = D = None
    if eta < 3:
        C = 0.5 * math.sqrt(3.0 + 2.0 * eta - eta * eta)
        mu_R = 0.5 * (1.0 - eta) * rho
        mu_I = C * rho
    elif eta > 3:
        D = 0.5 * math.sqrt(eta * eta - 2.0 * eta - 3.0)
    return CharRoots(lam[0], lam[1], lam[2], regime, rho, mu_R, mu_I, C, D)


# -- divided differences of s^p e^(s tau) ---------------------------------

def _min_gap(nodes: np.ndarray) -> float:
    k = len(nodes)
    return min(abs(nodes[i] - nodes[j]) for i in range(k) for j in range(i + 1, k))


def _partial_fractions(nodes: np.ndarray, tau: np.ndarray, max_power: int) -> np.ndarray:
    k = len(nodes)
    weights = np.array([
        1.0 / np.prod([nodes[j] - nodes[l] for l in range(k) if l != j]) for j in range(k)
    ])
    expo = np.exp(np.outer(nodes, tau))  # (k, m)
    out = np.empty((max_power + 1, tau.size), dtype=complex)
    for p in range(max_power + 1):
        out[p] = (weights * nodes ** p) @ expo
    return out


def _opitz(nodes: np.ndarray, tau: np.ndarray, max_power: int) -> np.ndarray:
    """Bidiagonal-matrix exponential route, stable for confluent nodes."""
    k = len(nodes)
    m = tau.size
    mu = nodes.mean()
    spread = float(np.max(np.abs(nodes - mu)))
    # exp(tau J) = e^(mu tau) D_tau exp(B) D_tau^-1 with B = diag(tau (lam - mu)) + subdiag(1).
    q = np.zeros(m, dtype=int)
    big = tau * spread > 0.5
    q[big] = np.ceil(np.log2(tau[big] * spread / 0.5)).astype(int)
    scale = np.ldexp(1.0, -q)
    B = np.zeros((m, k, k), dtype=complex)
    idx = np.arange(k)
    B[:, idx, idx] = (tau * scale)[:, None] * (nodes - mu)[None, :]
    B[:, idx[1:], idx[:-1]] = scale[:, None]
    F = np.broadcast_to(np.eye(k, dtype=complex), (m, k, k)).copy()
    term = F.copy()
    for it in range(1, 60):
        term = term @ B / it
        F += term
        if np.all(np.abs(term).max(axis=(1, 2)) <= _TAYLOR_TOL * np.abs(F).max(axis=(1, 2))):
            break
    for level in range(int(q.max(initial=0))):
        sel = q > level
        F[sel] = F[sel] @ F[sel]
    # undo the diagonal similarity: E[i, j] = tau^(i - j) F[i, j]
    powers = idx[:, None] - idx[None, :]
    with np.errstate(invalid="ignore"):
        tpow = np.where(powers >= 0, tau[:, None, None] ** np.maximum(powers, 0), 0.0)
    E = F * tpow * np.exp(mu * tau)[:, None, None]
    J = np.diag(nodes) + np.diag(np.ones(k - 1), -1)
    out = np.empty((max_power + 1, m), dtype=complex)
    cur = E
    for p in range(max_power + 1):
        out[p] = cur[:, k - 1, 0]
        cur = J @ cur
    return out


def exp_divided_differences(nodes, tau, max_power: int = 0, theta: float = THETA,
                            tau_switch: float = TAU_SWITCH) -> np.ndarray:
    """e[nodes](s^p e^(s tau)) for p = 0..max_power; returns shape (max_power + 1, m).

    The partial-fraction sum is used when the nodes are separated
    (min gap >= theta * max |node|) and tau * max |node| >= tau_switch;
    otherwise the Opitz route.  ``theta <= 0`` disables the Opitz route.
    """
    nodes = np.asarray(nodes, dtype=complex)
    tau = np.atleast_1d(np.asarray(tau, dtype=float)).ravel()
    if np.any(tau < 0):
        raise ValueError("tau must be non-negative")
    out = np.empty((max_power + 1, tau.size), dtype=complex)
    size = float(np.max(np.abs(nodes)))
    separated = _min_gap(nodes) >= theta * size if size > 0 else False
    use_pf = (tau * size >= tau_switch) & separated
    if theta <= 0:
        # confluence guard disabled: partial fractions everywhere
        use_pf = np.ones(tau.shape, dtype=bool)
    if np.any(use_pf):
        with np.errstate(all="ignore"):
            out[:, use_pf] = _partial_fractions(nodes, tau[use_pf], max_power)
    if np.any(~use_pf):
        out[:, ~use_pf] = _opitz(nodes, tau[~use_pf], max_power)
    return out


# -- kernels -------------------------------------------------------------

def _q_coeffs(eta: float):
    return {2: (1.0,), 1: (eta, 1.0), 0: (eta, eta, 1.0)}


@dataclass
class KernelValues:
    """Kernel matrix M[..., i, j] = d^i/dt^i K_j at (t, r), i up to ``order``."""

    t: np.ndarray
    r: np.ndarray
    M: np.ndarray
    imag_ratio: float = 0.0

    def _get(self, i: int, j: int) -> np.ndarray:
        return self.M[..., i, j]

    K0 = property(lambda self: self._get(0, 0))
    K1 = property(lambda self: self._get(0, 1))
    K2 = property(lambda self: self._get(0, 2))
    dK0 = property(lambda self: self._get(1, 0))
    dK1 = property(lambda self: self._get(1, 1))
    dK2 = property(lambda self: self._get(1, 2))
    ddK0 = property(lambda self: self._get(2, 0))
    ddK1 = property(lambda self: self._get(2, 1))
    ddK2 = property(lambda self: self._get(2, 2))


def _scaled_matrix(tau: np.ndarray, eta: float, order: int, theta: float,
                   tau_switch: float) -> np.ndarray:
    """G[m, i, j] for i = 0..order, complex."""
    lam = scaled_roots(eta)
    D = exp_divided_differences(lam, tau, order + 2, theta, tau_switch)
    Q = _q_coeffs(eta)
    G = np.zeros((tau.size, order + 1, 3), dtype=complex)
    for i in range(order + 1):
        for j in range(3):
            G[:, i, j] = sum(c * D[i + a] for a, c in enumerate(Q[j]))
    return G


def _to_physical(G: np.ndarray, t: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """M_ij = rho^(i-j) G_ij, written as t^(j-i) G_ij / tau^(j-i) when j >= i.

    The second form has the finite limit t^(j-i) / (j-i)! at tau = 0, which
    covers r = 0 (polynomial kernels) and t = 0 (identity).
    """
    tau = rho * t
    pos = tau > 0
    M = np.empty(G.shape, dtype=complex)
    for i in range(G.shape[1]):
        for j in range(3):
            d = j - i
            if d >= 0:
                col = (t ** d / math.factorial(d)).astype(complex)
                col[pos] = t[pos] ** d * G[pos, i, j] / tau[pos] ** d
            else:
                col = rho ** (-d) * G[:, i, j]
                col[t == 0] = 0.0
            M[:, i, j] = col
    return M


def kernel_values(t, r, sigma: float, eta: float, order: int = 2,
                  theta: float = THETA, tau_switch: float = TAU_SWITCH) -> KernelValues:
    """d^i K_j / dt^i for i = 0..order at every broadcast pair (t, r)."""
    t_arr, r_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    if np.any(t_arr < 0):
        raise ValueError("t must be non-negative")
    if np.any(r_arr < 0):
        raise ValueError("r must be non-negative")
    shape = t_arr.shape
    tf = t_arr.ravel()
    rho = r_arr.ravel() ** (2.0 * sigma / 3.0)
    G = _scaled_matrix(rho * tf, eta, order, theta, tau_switch)
    M = _to_physical(G, tf, rho)
    mag = np.abs(M).max()
    imag = float(np.abs(M.imag).max() / mag) if mag > 0 else 0.0
    return KernelValues(t_arr, r_arr, M.real.reshape(shape + (order + 1, 3)), imag)


def kernel_ode_residual(t, r, sigma: float, eta: float, theta: float = THETA,
                        tau_switch: float = TAU_SWITCH) -> np.ndarray:
    """Relative residual of the Fourier ODE, maximised over the three kernels.

    Each residual is divided by the sum of the magnitudes of the four terms,
    so the result measures cancellation relative to the size of the terms.
    """
    t_arr, r_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    shape = t_arr.shape
    tau = (r_arr.ravel() ** (2.0 * sigma / 3.0)) * t_arr.ravel()
    G = _scaled_matrix(tau, eta, 3, theta, tau_switch)
    terms = np.stack([G[:, 3, :], eta * G[:, 2, :], eta * G[:, 1, :], G[:, 0, :]])
    total = np.abs(terms.sum(axis=0))
    scale = np.abs(terms).sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        res = np.where(scale > 0, total / scale, 0.0)
    res = np.where(np.isnan(total), np.inf, res)
    res[(r_arr.ravel() == 0)] = 0.0
    return res.max(axis=1).reshape(shape)


def abel_defect(t, r, sigma: float, eta: float, theta: float = THETA) -> np.ndarray:
    """|det[d^i K_j] - exp(-eta rho t)| normalised by the Hadamard bound.

    det[d^i K_j] equals det G because the rho powers form a diagonal
    similarity; the Hadamard bound prod ||row_i|| is the natural scale for
    rounding error in a 3x3 determinant.
    """
    t_arr, r_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    tau = (r_arr.ravel() ** (2.0 * sigma / 3.0)) * t_arr.ravel()
    G = _scaled_matrix(tau, eta, 2, theta, TAU_SWITCH)
    det = np.linalg.det(G)
    exact = np.exp(-eta * tau)
    hadamard = np.prod(np.linalg.norm(G, axis=2), axis=1)
    err = np.abs(det - exact) / np.maximum(exact, hadamard)
    return err.reshape(t_arr.shape)


def duhamel_weights(h: float, r, sigma: float, eta: float, theta: float = THETA,
                    tau_switch: float = TAU_SWITCH) -> np.ndarray:
    """w_i = integral_0^h d^i K_2(s, r) ds for i = 0, 1, 2; shape (3,) + r.shape.

    w_0 is the third divided difference of e^(s h) over the roots and 0,
    scaled back to physical units; w_1 = K_2(h), w_2 = K_2'(h).
    """
    r_arr = np.asarray(r, dtype=float)
    rho = r_arr.ravel() ** (2.0 * sigma / 3.0)
    tau = rho * h
    nodes = np.append(scaled_roots(eta), 0.0)
    D4 = exp_divided_differences(nodes, tau, 0, theta, tau_switch)[0]
    w0 = np.full(tau.shape, h ** 3 / 6.0)
    pos = tau > 0
    w0[pos] = (h ** 3 * D4[pos] / tau[pos] ** 3).real
    kv = kernel_values(h, r_arr.ravel(), sigma, eta, order=1, theta=theta, tau_switch=tau_switch)
    out = np.stack([w0, kv.K2, kv.dK2])
    return out.reshape((3,) + r_arr.shape)


# -- envelopes -----------------------------------------------------------

def envelope_constant(eta: float) -> float:
    """Exponent c in the pointwise envelopes, in units of r^(2 sigma / 3).

    Decaying regimes: half the slowest decay rate among the roots.  Growing
    regime (eta < 1): twice the growth rate of the unstable pair.
    Marginal (eta = 1): 0.
    """
    lam = scaled_roots(eta)
    re = lam.real
    if eta < 1:
        return 2.0 * float(re.max())
    if eta == 1:
        return 0.0
    return 0.5 * float(np.min(np.abs(re)))


def pointwise_envelope(t, r, sigma: float, eta: float) -> np.ndarray:
    """Regime envelope bounding rho^j |K_j(t, r)| up to a constant factor."""
    t_arr, r_arr = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(r, dtype=float))
    tau = r_arr ** (2.0 * sigma / 3.0) * t_arr
    c = envelope_constant(eta)
    if eta < 1:
        return np.exp(c * tau)
    if eta == 1:
        return np.ones_like(tau)
    if eta == 3:
        return (1.0 + tau) ** 2 * np.exp(-tau)
    return np.exp(-c * tau)


def weighted_kernel_magnitude(t, r, sigma: float, eta: float) -> np.ndarray:
    """max_j rho^j |K_j(t, r)|, the quantity the envelopes bound."""
    kv = kernel_values(t, r, sigma, eta, order=0)
    rho = np.asarray(kv.r) ** (2.0 * sigma / 3.0)
    vals = np.stack([np.abs(kv.K0), rho * np.abs(kv.K1), rho ** 2 * np.abs(kv.K2)])
    return vals.max(axis=0)
