"""Periodic torus grids, FFT pair, fractional-Laplacian multipliers and norms.

Transform convention: ``forward`` is the plain sum with e^{-ik.x} (numpy's
default), ``inverse`` carries the 1/N^n normalisation.  Grid norms use the
physical volume element dx^n so that they approximate norms on R^n.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Tuple

import numpy as np


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid on [-L/2, L/2)^n with N points per axis."""

    n: int = 1
    L: float = 200.0
    N: int = 1024

    def __post_init__(self) -> None:
        if self.n not in (1, 2):
            raise GridError("only n = 1 or n = 2 tori are supported")
        if self.N <= 0 or self.N % 2:
            raise GridError("N must be a positive even integer")
        if not self.L > 0:
            raise GridError("L must be positive")

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.N,) * self.n

    @property
    def dx(self) -> float:
        return self.L / self.N

    @property
    def cell_volume(self) -> float:
        return self.dx ** self.n

    @cached_property
    def axis(self) -> np.ndarray:
        return -self.L / 2 + self.dx * np.arange(self.N)

    @cached_property
    def mode_index(self) -> np.ndarray:
        """Integer lattice m in {-N/2, ..., N/2 - 1} in FFT order."""
        return np.fft.fftfreq(self.N, d=1.0 / self.N).astype(int)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        return 2 * np.pi * self.mode_index / self.L

    def coords(self) -> Tuple[np.ndarray, ...]:
        return tuple(np.meshgrid(*([self.axis] * self.n), indexing="ij"))

    @cached_property
    def radius(self) -> np.ndarray:
        """|x| at every grid point."""
        return np.sqrt(sum(c * c for c in self.coords()))

    @cached_property
    def kmag(self) -> np.ndarray:
        """|k| on the spectral lattice, in FFT order."""
        ks = np.meshgrid(*([self.wavenumbers] * self.n), indexing="ij")
        return np.sqrt(sum(k * k for k in ks))

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True on modes carrying an index m = -N/2 along any axis."""
        ms = np.meshgrid(*([self.mode_index] * self.n), indexing="ij")
        mask = np.zeros(self.shape, dtype=bool)
        for m in ms:
            mask |= m == -self.N // 2
        return mask

    def sample(self, func) -> np.ndarray:
        """Evaluate ``func(*coords)`` on the grid."""
        return np.asarray(func(*self.coords()), dtype=float)


def _check(grid: TorusGrid, arr: np.ndarray) -> None:
    if arr.shape != grid.shape:
        raise GridError(f"array shape {arr.shape} does not match grid {grid.shape}")


def forward(grid: TorusGrid, values: np.ndarray) -> np.ndarray:
    values = np.asarray(values)
    _check(grid, values)
    return np.fft.fftn(values)


def inverse(grid: TorusGrid, spec: np.ndarray, real: bool = True) -> np.ndarray:
    spec = np.asarray(spec)
    _check(grid, spec)
    out = np.fft.ifftn(spec)
    return out.real if real else out


def symbol(grid: TorusGrid, order: float, zero_nyquist: bool = False) -> np.ndarray:
    """|k|^(2 order) on the lattice with the k = 0 convention of the multiplier."""
    if order < 0:
        raise GridError("negative order")
    if order == 0:
        mult = np.ones(grid.shape)
    else:
        mult = grid.kmag ** (2.0 * order)
    if zero_nyquist:
        mult = np.where(grid.nyquist_mask, 0.0, mult)
    return mult


def fractional_laplacian(grid: TorusGrid, spec: np.ndarray, order: float,
                         zero_nyquist: bool = False) -> np.ndarray:
    """Apply (-Delta)^order mode-wise: multiply by |k|^(2 order).

    ``order`` is the total exponent sigma*alpha.  The k = 0 coefficient is
    annihilated for positive order and kept for order 0.
    """
    _check(grid, spec)
    return spec * symbol(grid, order, zero_nyquist)


def dealias(grid: TorusGrid, spec: np.ndarray, rule: float = 2.0 / 3.0) -> np.ndarray:
    """Zero every coefficient with some |m_j| > rule * N / 2."""
    if not 0 < rule <= 1:
        raise GridError("rule must lie in (0, 1]")
    _check(grid, spec)
    cut = rule * grid.N / 2
    ms = np.meshgrid(*([grid.mode_index] * grid.n), indexing="ij")
    keep = np.ones(grid.shape, dtype=bool)
    for m in ms:
        keep &= np.abs(m) <= cut
    return np.where(keep, spec, 0.0)


def sobolev_norm(grid: TorusGrid, spec: np.ndarray, s: float = 0.0) -> float:
    """Homogeneous H^s norm computed from the coefficients.

    Parseval: sum |u_j|^2 dx^n = (L^n / N^(2n)) sum |c_k|^2.
    """
    _check(grid, spec)
    if s < 0:
        raise GridError("s must be non-negative")
    weight = symbol(grid, s)
    scale = grid.L ** grid.n / float(grid.N) ** (2 * grid.n)
    return float(np.sqrt(scale * np.sum(weight * np.abs(spec) ** 2)))


def lp_norm(grid: TorusGrid, values: np.ndarray, q: float = 2) -> float:
    _check(grid, values)
    a = np.abs(values)
    if q == np.inf:
        return float(a.max())
    if q == 1:
        return float(a.sum() * grid.cell_volume)
    if q == 2:
        return float(np.sqrt(np.sum(a * a) * grid.cell_volume))
    raise GridError("q must be 1, 2 or inf")
