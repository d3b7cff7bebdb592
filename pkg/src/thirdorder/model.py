"""Problem parameters, eta-regime classification and closed-form exponents.

Every exponent is computed in exact rational arithmetic when all inputs are
``int`` or ``fractions.Fraction`` and in double precision otherwise.  An
infinite critical exponent is represented by :data:`UNBOUNDED`, never by a
float sentinel.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Optional, Tuple, Union

Number = Union[Fraction, float]


class ParameterDomainError(ValueError):
    """A parameter lies outside its admissible domain (e.g. eta <= 0)."""


class RegimeError(ValueError):
    """A formula is requested outside the regime in which it is valid."""


class Unbounded:
    """The extended-real value +infinity.

    Compares greater than every real number, converts to ``float('inf')`` and
    refuses arithmetic so that sweeps never silently propagate NaN.
    """

    _instance: Optional["Unbounded"] = None

    def __new__(cls) -> "Unbounded":
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self) -> str:
        return "UNBOUNDED"

    def __str__(self) -> str:
        return "inf"

    def __float__(self) -> float:
        return math.inf

    def __hash__(self) -> int:
        return hash(math.inf)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Unbounded) or (
            isinstance(other, float) and other == math.inf
        )

    def __gt__(self, other: object) -> bool:
        return not isinstance(other, Unbounded)

    def __ge__(self, other: object) -> bool:
        return True

    def __lt__(self, other: object) -> bool:
        return False

    def __le__(self, other: object) -> bool:
        return isinstance(other, Unbounded)


UNBOUNDED = Unbounded()
ExtReal = Union[Fraction, float, Unbounded]


def is_unbounded(x: object) -> bool:
    return isinstance(x, Unbounded)


def _exact(*xs: object) -> bool:
    return all(isinstance(x, (int, Fraction)) and not isinstance(x, bool) for x in xs)


def _coerce(*xs: Real) -> Tuple[Number, ...]:
    """Promote to Fractions when every input is rational, else to floats."""
    for x in xs:
        if isinstance(x, bool) or not isinstance(x, Real):
            raise ParameterDomainError(f"expected a real number, got {x!r}")
    if _exact(*xs):
        return tuple(Fraction(x) for x in xs)
    return tuple(float(x) for x in xs)


def _require_positive(**kw: Real) -> None:
    for name, value in kw.items():
        if not value > 0:
            raise ParameterDomainError(f"{name} must be positive, got {value!r}")


def _close(a: Number, b: Number, tol: float) -> bool:
    if tol == 0:
        return a == b
    return abs(a - b) <= tol


class Stability(enum.Enum):
    IllPosedSobolev = "ill-posed"
    MarginallyStable = "marginal"
    GevreySmoothing = "gevrey"


class Profile(enum.Enum):
    DiffusionWaves = "diffusion-waves"
    DegenerateDiffusion = "degenerate-diffusion"
    PureDiffusion = "pure-diffusion"


@dataclass(frozen=True)
class ModelParams:
    """The tuple (n, sigma, eta, p, epsilon).

    ``torus`` marks parameters destined for a periodic-grid run, which only
    supports n in {1, 2}.  Quadrature-mode runs accept any real n > 0.
    """

    n: Real
    sigma: Real
    eta: Real
    p: Real = 2
    epsilon: Real = 1
    torus: bool = False

    def __post_init__(self) -> None:
        _require_positive(n=self.n, sigma=self.sigma, eta=self.eta, epsilon=self.epsilon)
        if not self.p > 1:
            raise ParameterDomainError(f"p must exceed 1, got {self.p!r}")
        if self.torus and self.n not in (1, 2):
            raise ParameterDomainError("torus mode requires n in {1, 2}")

    @property
    def regime(self) -> "RegimeInfo":
        return classify_eta(self.eta, n=self.n, sigma=self.sigma)

    @property
    def p_crit(self) -> ExtReal:
        return critical_exponent(self.n, self.sigma)


@dataclass(frozen=True)
class RegimeInfo:
    stability: Stability
    profile: Profile
    dimension_window_ok: Optional[bool] = None
    window_reason: str = ""


@dataclass(frozen=True)
class ExponentTable:
    p_crit: ExtReal
    l2_rate: Number
    hs_rate: Number
    refined_gain: int = 1
    log_loss_flag: bool = False
    lifespan_exp_subcrit: Optional[Number] = None


def classify_eta(eta: Real, tol: float = 0.0, n: Optional[Real] = None,
                 sigma: Optional[Real] = None) -> RegimeInfo:
    """Stability and profile class of the damping parameter.

    Thresholds sit at eta = 1 (stability) and eta = 3 (profile).  With the
    default ``tol = 0`` the comparison is literal; a positive ``tol`` snaps
    values within ``tol`` of a threshold onto it.
    """
    _require_positive(eta=eta)
    if _close(eta, 1, tol):
        stability = Stability.MarginallyStable
    elif eta < 1:
        stability = Stability.IllPosedSobolev
    else:
        stability = Stability.GevreySmoothing

    if _close(eta, 3, tol):
        profile = Profile.DegenerateDiffusion
    elif eta < 3:
        profile = Profile.DiffusionWaves
    else:
        profile = Profile.PureDiffusion

    if n is None or sigma is None:
        return RegimeInfo(stability, profile)
    ok, reason = dimension_window_check(n, sigma, eta, tol=tol)
    return RegimeInfo(stability, profile, ok, reason)


def critical_exponent(n: Real, sigma: Real) -> ExtReal:
    """p_crit = 1 + 6 sigma / (3n - 4 sigma)_+, unbounded when 3n <= 4 sigma."""
    _require_positive(n=n, sigma=sigma)
    n, sigma = _coerce(n, sigma)
    gap = 3 * n - 4 * sigma
    if gap <= 0:
        return UNBOUNDED
    return 1 + 6 * sigma / gap


def conjugate(p: Number) -> Number:
    return p / (p - 1)


def lifespan_exponent(n: Real, sigma: Real, p: Real) -> Number:
    """Power of epsilon in the subcritical lifespan T ~ C eps^k.

    k = -2 sigma / (6 sigma p' - (3n + 2 sigma)) with p' = p / (p - 1).
    """
    _require_positive(n=n, sigma=sigma)
    if not p > 1:
        raise ParameterDomainError(f"p must exceed 1, got {p!r}")
    pc = critical_exponent(n, sigma)
    n, sigma, p = _coerce(n, sigma, p)
    if not p < pc:
        raise RegimeError(
            f"p = {p} >= p_crit = {pc}: the lifespan is not a power law in epsilon"
        )
    denom = 6 * sigma * conjugate(p) - (3 * n + 2 * sigma)
    if denom == 0:
        raise RegimeError("6 sigma p' = 3n + 2 sigma: exponent undefined")
    return -2 * sigma / denom


def dimension_window_check(n: Real, sigma: Real, eta: Real,
                           tol: float = 0.0) -> Tuple[bool, str]:
    """Whether (n, sigma) lies in the window where the decay estimates hold."""
    _require_positive(n=n, sigma=sigma, eta=eta)
    n, sigma = _coerce(n, sigma)
    low = 4 * sigma / 3
    log_line = 8 * sigma / 3
    if _close(eta, 3, tol):
        return True, "eta = 3: every n > 0 admissible"
    if eta <= 1 or _close(eta, 1, tol):
        return False, "eta <= 1: no decay estimates (not in the Gevrey-smoothing regime)"
    if not n > low:
        return False, f"n > 4 sigma/3 violated ({n} <= {low})"
    if eta > 3 and _close(n, log_line, tol):
        return False, "n = 8 sigma/3 excluded for eta > 3"
    return True, "ok"


def decay_rates(n: Real, sigma: Real, eta: Real, p: Optional[Real] = None,
                tol: float = 0.0) -> ExponentTable:
    """Large-time decay exponents of the linear solution.

    Norms behave like (1 + t)^(-rate).  The excluded line n = 8 sigma / 3 with
    eta > 3 is accepted and reported through ``log_loss_flag``.
    """
    ok, reason = dimension_window_check(n, sigma, eta, tol=tol)
    nq, sq = _coerce(n, sigma)
    log_loss = eta > 3 and not _close(eta, 3, tol) and _close(nq, 8 * sq / 3, tol)
    if not ok and not log_loss:
        raise RegimeError(reason)
    lifespan = None
    pc = critical_exponent(n, sigma)
    if p is not None and p < pc:
        lifespan = lifespan_exponent(n, sigma, p)
    return ExponentTable(
        p_crit=pc,
        l2_rate=(3 * nq - 8 * sq) / (4 * sq),
        hs_rate=3 * nq / (4 * sq),
        refined_gain=1,
        log_loss_flag=bool(log_loss),
        lifespan_exp_subcrit=lifespan,
    )


@dataclass(frozen=True)
class Interval:
    lo: Number
    hi: ExtReal

    def __contains__(self, p: Real) -> bool:
        return self.lo <= p and (is_unbounded(self.hi) or p <= self.hi)


def gn_admissible_p(n: Real, sigma: Real) -> Interval:
    """The closed range [2, 3n / (3n - 8 sigma)_+] of Gagliardo-Nirenberg exponents."""
    _require_positive(n=n, sigma=sigma)
    n, sigma = _coerce(n, sigma)
    if n < 1:
        raise ParameterDomainError("n >= 1 required")
    if n > 16 * sigma / 3:
        raise RegimeError("n > 16 sigma/3: the admissible range is empty")
    gap = 3 * n - 8 * sigma
    hi: ExtReal = UNBOUNDED if gap <= 0 else 3 * n / gap
    return Interval(Fraction(2) if isinstance(n, Fraction) else 2.0, hi)


def global_existence_window(n: Real, sigma: Real) -> Tuple[bool, str]:
    """Whether small-data global existence is covered: 4 sigma/3 < n <= 10 sigma/3.

    Points outside are labelled as an unverified regime, not as blow-up.
    """
    _require_positive(n=n, sigma=sigma)
    n, sigma = _coerce(n, sigma)
    if 4 * sigma / 3 < n <= 10 * sigma / 3:
        return True, "ok"
    return False, "unverified regime: outside 4 sigma/3 < n <= 10 sigma/3"
