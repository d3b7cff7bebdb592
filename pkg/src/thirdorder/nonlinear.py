"""Mild-solution integrator for u_ttt + A u + eta A^(1/3) u_tt + eta A^(2/3) u_t = |u|^p
on the torus, with the time-weighted X(T) norm and blow-up detection.

The state triple (u, u_t, u_tt) is advanced mode-wise by the exact linear
propagator; only the Duhamel integral of the nonlinearity is approximated,
with N_hat frozen over the step (Euler) or sampled at the half step (midpoint).
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from . import spectral
from .kernels import duhamel_weights, kernel_values
from .model import ModelParams, RegimeError, decay_rates
from .spectral import TorusGrid


class Scheme(enum.Enum):
    DuhamelMidpoint = "midpoint"
    DuhamelEuler = "euler"

    @property
    def order(self) -> int:
        return 2 if self is Scheme.DuhamelMidpoint else 1


@dataclass(frozen=True)
class MildSolverConfig:
    """Step control.  ``adaptive_safety`` shrinks the step near blow-up to
    h <= safety * sup|u|^(-(p-1)/3), rounded down to dt / 2^k; None disables it."""

    dt: float = 0.01
    scheme: Scheme = Scheme.DuhamelMidpoint
    blowup_threshold: float = 1e6
    dealias: bool = True
    max_time: float = 10.0
    nonlinearity: float = 1.0
    adaptive_safety: Optional[float] = 0.05
    min_dt: float = 1e-7
    snapshot_ratio: float = 1.1
    max_snapshots: int = 400
    store_every: int = 0
    sensitivity_factor: float = 100.0
    check_resolution: bool = False

    def __post_init__(self) -> None:
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if not self.blowup_threshold > 1:
            raise ValueError("blowup_threshold must exceed 1")
        if not self.max_time > 0:
            raise ValueError("max_time must be positive")


@dataclass
class StateTriple:
    u: np.ndarray
    ut: np.ndarray
    utt: np.ndarray
    t: float = 0.0

    def stack(self) -> np.ndarray:
        return np.stack([self.u, self.ut, self.utt])

    @classmethod
    def from_stack(cls, U: np.ndarray, t: float) -> "StateTriple":
        return cls(U[0], U[1], U[2], t)

    @classmethod
    def from_physical(cls, grid: TorusGrid, fields: Sequence[np.ndarray], t: float = 0.0) -> "StateTriple":
        specs = [spectral.forward(grid, np.asarray(f, dtype=float)) for f in fields]
        return cls(*specs, t=t)

    def physical(self, grid: TorusGrid) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        return tuple(spectral.inverse(grid, s) for s in (self.u, self.ut, self.utt))


@dataclass
class TrajectoryRecord:
    times: List[float] = field(default_factory=list)
    l2_norms: List[float] = field(default_factory=list)
    hs_norms: List[float] = field(default_factory=list)
    sup_norms: List[float] = field(default_factory=list)
    xT_weighted_sup: List[float] = field(default_factory=list)
    max_imag_ratio: float = 0.0
    stored: List[StateTriple] = field(default_factory=list)

    def rows(self):
        for i, t in enumerate(self.times):
            yield dict(t=t, l2=self.l2_norms[i], hs=self.hs_norms[i], sup=self.sup_norms[i],
                       xT=self.xT_weighted_sup[i])


@dataclass
class BlowupReport:
    blew_up: bool
    lifespan_estimate: float
    threshold_sensitivity: Optional[float] = None
    resolution_flag: Optional[bool] = None
    reference_scale: float = 0.0
    crossings: Dict[float, float] = field(default_factory=dict)
    steps: int = 0
    notes: List[str] = field(default_factory=list)


# -- propagators ---------------------------------------------------------

def kernel_matrix(h: float, r, params: ModelParams) -> np.ndarray:
    """M[..., i, j] = d^i K_j(h, r): (u, u_t, u_tt)(t + h) = M (u, u_t, u_tt)(t) for the linear flow."""
    if h < 0:
        raise ValueError("h must be non-negative")
    return kernel_values(h, r, float(params.sigma), float(params.eta), order=2).M


class _Propagator:
    """Cached kernel matrices and Duhamel weights on the lattice radii."""

    def __init__(self, grid: TorusGrid, params: ModelParams):
        self.grid = grid
        self.params = params
        radii = grid.kmag.ravel()
        self.unique, self.inverse = np.unique(np.round(radii, 12), return_inverse=True)
        self._cache: Dict[float, Tuple[np.ndarray, np.ndarray]] = {}

    def get(self, h: float) -> Tuple[np.ndarray, np.ndarray]:
        if h not in self._cache:
            if len(self._cache) > 64:
                self._cache.clear()
            s, e = float(self.params.sigma), float(self.params.eta)
            M = kernel_values(h, self.unique, s, e, order=2).M[self.inverse]
            w = duhamel_weights(h, self.unique, s, e)[:, self.inverse]
            shape = self.grid.shape
            M = np.moveaxis(M, 0, -1).reshape((3, 3) + shape)
            self._cache[h] = (M, w.reshape((3,) + shape))
        return self._cache[h]


def _nonlinear_hat(grid: TorusGrid, u_hat: np.ndarray, p: float, coef: float,
                   dealias: bool) -> np.ndarray:
    if coef == 0:
        return np.zeros_like(u_hat)
    u = spectral.inverse(grid, u_hat)
    Nhat = spectral.forward(grid, coef * np.abs(u) ** p)
    return spectral.dealias(grid, Nhat) if dealias else Nhat


def _advance(prop: _Propagator, U: np.ndarray, h: float, p: float, cfg: MildSolverConfig) -> np.ndarray:
    grid = prop.grid
    M, w = prop.get(h)
    lin = np.einsum("ij...,j...->i...", M, U)
    N0 = _nonlinear_hat(grid, U[0], p, cfg.nonlinearity, cfg.dealias)
    if cfg.scheme is Scheme.DuhamelEuler:
        return lin + w * N0
    Mh, wh = prop.get(0.5 * h)
    u_half = np.einsum("j...,j...->...", Mh[0], U) + wh[0] * N0
    Nh = _nonlinear_hat(grid, u_half, p, cfg.nonlinearity, cfg.dealias)
    return lin + w * Nh


def duhamel_step(state: StateTriple, h: float, params: ModelParams, config: MildSolverConfig,
                 grid: TorusGrid, _prop: Optional[_Propagator] = None) -> StateTriple:
    """Advance the state triple by h <= config.dt."""
    if h > config.dt * (1 + 1e-12):
        raise ValueError("h must not exceed config.dt")
    prop = _prop or _Propagator(grid, params)
    U = _advance(prop, state.stack(), h, float(params.p), config)
    return StateTriple.from_stack(U, state.t + h)


# -- norms ----------------------------------------------------------------

def _weights(params: ModelParams):
    n, sigma, eta = params.n, params.sigma, params.eta
    table = decay_rates(n, sigma, eta)
    a = float(table.l2_rate)
    b = float(table.hs_rate)
    log_loss = table.log_loss_flag
    return a, b, log_loss


def _xt_term(t: float, l2: float, hs: float, weights) -> float:
    a, b, log_loss = weights
    wl2 = (1 + t) ** a
    if log_loss:
        wl2 /= math.log(math.e + t)
    return wl2 * l2 + (1 + t) ** b * hs


def xT_norm(traj: TrajectoryRecord, params: ModelParams, T: Optional[float] = None) -> float:
    """sup over recorded t <= T of the weighted L^2 plus H^(4 sigma/3) norms."""
    if not traj.times:
        return 0.0
    try:
        weights = _weights(params)
    except RegimeError:
        weights = (0.0, 0.0, False)
    vals = [_xt_term(t, l2, hs, weights)
            for t, l2, hs in zip(traj.times, traj.l2_norms, traj.hs_norms)
            if T is None or t <= T]
    return float(max(vals)) if vals else 0.0


# -- integration ---------------------------------------------------------

def _sup(grid: TorusGrid, u_hat: np.ndarray) -> float:
    return float(np.abs(spectral.inverse(grid, u_hat)).max())


def _snapshot_times(cfg: MildSolverConfig) -> np.ndarray:
    k = cfg.max_snapshots - 1
    first = max(cfg.dt, cfg.max_time / cfg.snapshot_ratio ** (k - 1))
    count = int(math.floor(math.log(cfg.max_time / first) / math.log(cfg.snapshot_ratio))) + 1
    times = first * cfg.snapshot_ratio ** np.arange(max(count, 1))
    return np.unique(np.concatenate([[0.0], times[times < cfg.max_time], [cfg.max_time]]))


def _step_size(cfg: MildSolverConfig, sup: float, p: float) -> float:
    if cfg.adaptive_safety is None or sup <= 0:
        return cfg.dt
    limit = cfg.adaptive_safety * sup ** (-(p - 1.0) / 3.0)
    h = cfg.dt
    while h > limit and h / 2 >= cfg.min_dt:
        h /= 2
    return h


def _localize(prop, U, t, h, level, p, cfg, grid) -> float:
    """Time of first crossing of sup|u| = level inside (t, t + h], to within h/8."""
    for _ in range(3):
        half = 0.5 * h
        V = _advance(prop, U, half, p, cfg)
        s = _sup(grid, V[0])
        if not np.isfinite(s) or s >= level:
            h = half
        else:
            U, t, h = V, t + half, h - half
    return t + h


def integrate(params: ModelParams, data: Sequence[np.ndarray], config: MildSolverConfig,
              grid: TorusGrid) -> Tuple[TrajectoryRecord, BlowupReport]:
    """Step from t = 0 to ``max_time`` or until sup|u| exceeds the threshold.

    ``data`` are the physical profiles (u0, u1, u2); they are multiplied by
    ``params.epsilon``.  The threshold is ``blowup_threshold`` times the
    largest sup-norm of the scaled data (u0 alone may vanish).
    """
    if float(params.p) < 2:
        note = "p < 2: outside the hypotheses of the lifespan theorems"
    else:
        note = ""
    eps = float(params.epsilon)
    fields = [eps * np.asarray(d, dtype=float) for d in data]
    ref = max(float(np.abs(f).max()) for f in fields)
    rec = TrajectoryRecord()
    report = BlowupReport(False, math.inf, reference_scale=ref)
    if note:
        report.notes.append(note)
    try:
        weights = _weights(params)
    except RegimeError:
        weights = (0.0, 0.0, False)
        report.notes.append("decay rates undefined for these parameters; X(T) weights set to 1")
    p = float(params.p)
    prop = _Propagator(grid, params)
    U = StateTriple.from_physical(grid, fields).stack()
    t = 0.0
    levels = [config.blowup_threshold * ref, config.sensitivity_factor * config.blowup_threshold * ref]
    if ref == 0:
        levels = [math.inf, math.inf]
    schedule = _snapshot_times(config)
    next_snap = 0
    running = 0.0
    steps = 0

    def record(U, t):
        nonlocal running
        u_c = spectral.inverse(grid, U[0], real=False)
        sup = float(np.abs(u_c.real).max())
        if sup > 0:
            rec.max_imag_ratio = max(rec.max_imag_ratio, float(np.abs(u_c.imag).max()) / sup)
        l2 = spectral.sobolev_norm(grid, U[0], 0.0)
        hs = spectral.sobolev_norm(grid, U[0], 4.0 * float(params.sigma) / 3.0)
        running = max(running, _xt_term(t, l2, hs, weights))
        rec.times.append(t)
        rec.l2_norms.append(l2)
        rec.hs_norms.append(hs)
        rec.sup_norms.append(sup)
        rec.xT_weighted_sup.append(running)

    def store(U, t):
        rec.stored.append(StateTriple.from_stack(U.copy(), t))

    record(U, t)
    next_snap = 1
    if config.store_every:
        store(U, t)
    sup = _sup(grid, U[0])
    while t < config.max_time * (1 - 1e-14):
        h = min(_step_size(config, sup, p), config.max_time - t)
        V = _advance(prop, U, h, p, config)
        steps += 1
        s_new = _sup(grid, V[0])
        if not np.isfinite(s_new) or s_new >= levels[0]:
            for level in levels:
                if level in report.crossings:
                    continue
                if not np.isfinite(s_new) or s_new >= level:
                    report.crossings[level] = _localize(prop, U, t, h, level, p, config, grid)
            if not report.blew_up:
                report.blew_up = True
                report.lifespan_estimate = report.crossings[levels[0]]
            if len(report.crossings) == len(levels) or not np.isfinite(s_new):
                break
        U, t, sup = V, t + h, s_new
        if config.store_every and steps % config.store_every == 0:
            store(U, t)
        if not report.blew_up:
            while next_snap < schedule.size and t >= schedule[next_snap] * (1 - 1e-12):
                next_snap += 1
                if rec.times[-1] < t:
                    record(U, t)
    if report.blew_up:
        T1 = report.crossings[levels[0]]
        T2 = report.crossings.get(levels[1])
        if T2 is not None:
            report.threshold_sensitivity = abs(T2 - T1) / T1
        else:
            report.notes.append("run stopped before reaching the sensitivity threshold")
    report.steps = steps
    if config.check_resolution and report.blew_up:
        from dataclasses import replace
        half = replace(config, dt=config.dt / 2, check_resolution=False, store_every=0)
        _, rep2 = integrate(params, data, half, grid)
        if rep2.blew_up:
            report.resolution_flag = abs(rep2.lifespan_estimate - report.lifespan_estimate) \
                <= 0.05 * report.lifespan_estimate
        else:
            report.resolution_flag = False
    return rec, report


def lifespan_at_threshold(report: BlowupReport, factor: float) -> Optional[float]:
    """Crossing time for threshold ``factor`` times the reference scale, if it was recorded."""
    for level, t in report.crossings.items():
        if math.isclose(level, factor * report.reference_scale, rel_tol=1e-9):
            return t
    return None
