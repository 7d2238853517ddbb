"""Closed-form spectral theory of a level coupled to a power-law band.

Everything in this module is a pure function of a :class:`BandProfile`:
the band-weighted coupling intensity (the spectral function), its
time-domain transform (the coupling autocorrelation), the second-order
shift of the distinguished level (the shift function), and the
characteristic frequencies and times that organize the decay of the
survival amplitude.

Units: hbar = 1 throughout, so frequencies and energies are
interchangeable.  The coupling strength ``epsilon`` carries units of
1/time^(2-s); the band is flat (Ohmic) at s = 1.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import integrate, special

__all__ = [
    "BandProfile",
    "Cutoff",
    "TimeScales",
    "SpectralWindowWarning",
    "RegimeWarning",
    "spectral_function",
    "correlation_function",
    "correlation_zero",
    "wigner_time",
    "wigner_time_estimate",
    "universal_window",
    "lamb_shift",
    "lamb_shift_integral",
    "lamb_shift_discrete",
    "core_frequencies",
    "tail_weight",
    "solve_tail_crossover",
    "crossover_time",
    "crossover_time_numeric",
    "core_border_of_time",
    "timescales",
]

_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

class Cutoff(enum.Enum):
    """Ultraviolet regularization of the band profile."""

    EXPONENTIAL = "exponential"
    SHARP = "sharp"


class SpectralWindowWarning(UserWarning):
    """A universal-regime formula was evaluated outside its validity window."""


class RegimeWarning(UserWarning):
    """The characteristic-time ordering t_c < t0 < t_H is violated."""


@dataclass(frozen=True)
class BandProfile:
    """Static description of the band a distinguished level couples to.

    Parameters
    ----------
    s : float
        Spectral exponent of the band.  0 < s < 2 is the universal
        regime; the marginal values s = 0 and s = 2 dispatch to
        dedicated logarithmic formulas where those exist.
    epsilon : float
        Coupling strength, units 1/time^(2-s).
    omega_c : float
        Ultraviolet cutoff frequency.
    omega_rho : float
        Infrared cutoff; equals the mean level spacing 1/rho of the
        discretized band.
    cutoff : Cutoff
        Smooth exponential envelope or a sharp edge at ``omega_c``.
    """

    s: float
    epsilon: float
    omega_c: float
    omega_rho: float
    cutoff: Cutoff = Cutoff.EXPONENTIAL

    def __post_init__(self) -> None:
        if not np.isfinite(self.s):
            raise ValueError("s must be finite")
        if not (self.epsilon >= 0.0):
            raise ValueError("epsilon must be non-negative")
        if not (self.omega_c > self.omega_rho > 0.0):
            raise ValueError("need omega_c > omega_rho > 0")

    @property
    def rho(self) -> float:
        """Mean level density of the discretized band, 1/omega_rho."""
        return 1.0 / self.omega_rho


@dataclass(frozen=True)
class TimeScales:
    """Characteristic times and frequencies of a band profile."""

    t_H: float      # Heisenberg time, 2*pi*rho
    t_c: float      # semiclassical time, 2*pi/omega_c
    t0: float       # generalized Wigner time
    t_inf: float    # stretched-to-power-law crossover time
    gamma0: float   # core half-width of the single-row model
    gamma_o: float  # core border frequency of the banded model

    @property
    def in_universal_regime(self) -> bool:
        return self.t_c < self.t0 < self.t_H

    def as_dict(self) -> dict:
        return {
            "t0": self.t0,
            "t_c": self.t_c,
            "t_H": self.t_H,
            "t_inf": self.t_inf,
            "gamma0": self.gamma0,
            "gamma_o": self.gamma_o,
        }


# ---------------------------------------------------------------------------
# quadrature helpers
# ---------------------------------------------------------------------------

def _quad_geom(f, a: float, b: float, limit: int = 600) -> float:
    """Adaptive quadrature with geometric breakpoints.

    Plain ``quad`` silently loses integrable endpoint singularities and
    many-decade integrands; seeding it with a geometric ladder of
    breakpoints keeps the subdivision honest.
    """
    if b <= a:
        return 0.0
    if a <= 0.0:
        pts = [b * 10.0 ** (-k) for k in range(1, 14)]
    else:
        ndec = max(2, int(math.log10(b / a)) + 2)
        pts = list(np.geomspace(a, b, ndec))
    pts = sorted({float(p) for p in pts if a < p < b})
    val, _ = integrate.quad(f, a, b, points=pts or None, limit=limit)
    return val


def _bisect(f, lo: float, hi: float, rtol: float = 1e-12, maxit: int = 200) -> float:
    """Bracketed bisection; assumes f(lo) and f(hi) have opposite signs."""
    flo = f(lo)
    for _ in range(maxit):
        mid = 0.5 * (lo + hi)
        if hi - lo <= rtol * max(abs(lo), abs(hi)):
            return mid
        fm = f(mid)
        if fm == 0.0:
            return mid
        if (fm > 0.0) == (flo > 0.0):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# spectral function and its transform
# ---------------------------------------------------------------------------

def spectral_function(profile: BandProfile, omega) -> np.ndarray | float:
    """Band-weighted coupling intensity 2*pi*eps^2*|w|^(s-1) with cutoff.

    Even in omega.  For s < 1 the value diverges at omega = 0; a signaled
    infinity is returned there, never a NaN.
    """
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    aw = np.abs(np.atleast_1d(w))
    s = profile.s

    base = np.where(aw > 0.0, aw, 1.0)
    body = base ** (s - 1.0)
    if s < 1.0:
        body = np.where(aw > 0.0, body, np.inf)
    elif s > 1.0:
        body = np.where(aw > 0.0, body, 0.0)
    # s == 1: |w|^0 == 1 everywhere, including w = 0

    if profile.cutoff is Cutoff.SHARP:
        env = (aw <= profile.omega_c).astype(float)
    else:
        env = np.exp(-aw / profile.omega_c)

    out = _TWO_PI * profile.epsilon**2 * body * env
    return float(out[0]) if scalar else out


def _corr_sharp_scalar(s: float, eps: float, wc: float, t: float) -> float:
    """C(t) for the sharp cutoff: 2 eps^2 Int_0^wc w^(s-1) cos(w t) dw."""
    t = abs(float(t))
    a = wc if t == 0.0 else min(wc, 0.125 / t)

    # non-oscillatory head; substitute u = w^s when the w -> 0 end is singular
    if s < 1.0:
        head, _ = integrate.quad(
            lambda u: math.cos(u ** (1.0 / s) * t), 0.0, a**s, limit=200)
        head /= s
    else:
        head, _ = integrate.quad(
            lambda w: w ** (s - 1.0) * math.cos(w * t), 0.0, a, limit=200)

    # oscillatory tail with an explicit cosine weight
    tail = 0.0
    if a < wc:
        cycles = (wc - a) * t / _TWO_PI
        tail, _ = integrate.quad(
            lambda w: w ** (s - 1.0), a, wc,
            weight="cos", wvar=t, limit=min(10_000, 60 + int(4.0 * cycles)))
    return 2.0 * eps**2 * (head + tail)


def correlation_function(profile: BandProfile, t) -> np.ndarray | float:
    """Coupling autocorrelation C(t), the 1/(2 pi)-measure inverse FT of
    the spectral function.

    Exponential cutoff uses the closed form
    ``2 eps^2 Gamma(s) (wc^-2 + t^2)^(-s/2) cos(s arctan(wc t))``;
    the sharp cutoff is integrated adaptively.  Real and even in t.
    """
    s, eps, wc = profile.s, profile.epsilon, profile.omega_c
    tt = np.asarray(t, dtype=float)
    scalar = tt.ndim == 0
    tt = np.atleast_1d(tt)
    if profile.cutoff is Cutoff.EXPONENTIAL:
        out = (2.0 * eps**2 * special.gamma(s)
               * (wc**-2.0 + tt * tt) ** (-0.5 * s)
               * np.cos(s * np.arctan(wc * tt)))
    else:
        out = np.array([_corr_sharp_scalar(s, eps, wc, x) for x in tt])
    return float(out[0]) if scalar else out


def correlation_zero(profile: BandProfile) -> float:
    """C(0): total coupling weight Int C~(w) dw / (2 pi), in closed form."""
    s, eps, wc = profile.s, profile.epsilon, profile.omega_c
    if profile.cutoff is Cutoff.SHARP:
        return 2.0 * eps**2 * wc**s / s
    return 2.0 * eps**2 * special.gamma(s) * wc**s


# ---------------------------------------------------------------------------
# characteristic times
# ---------------------------------------------------------------------------

def wigner_time(profile: BandProfile) -> float:
    """Generalized Wigner time t0, the scale of the survival decay.

    t0 = [2 pi eps^2 / (Gamma(3-s) sin(s pi/2))]^(-1/(2-s)); reduces to
    the golden-rule time 1/(2 pi eps^2) at s = 1.
    """
    s, eps = profile.s, profile.epsilon
    if not 0.0 < s < 2.0:
        raise ValueError("wigner_time requires 0 < s < 2")
    if eps == 0.0:
        return math.inf
    rate = _TWO_PI * eps**2 / (special.gamma(3.0 - s) * math.sin(0.5 * math.pi * s))
    return rate ** (-1.0 / (2.0 - s))


def wigner_time_estimate(profile: BandProfile) -> float:
    """Order-of-magnitude variant of :func:`wigner_time` with the
    Gamma/sine prefactor replaced by (2-s)s; coincides exactly at s = 1."""
    s, eps = profile.s, profile.epsilon
    if not 0.0 < s < 2.0:
        raise ValueError("wigner_time_estimate requires 0 < s < 2")
    if eps == 0.0:
        return math.inf
    rate = _TWO_PI * eps**2 / ((2.0 - s) * s)
    return rate ** (-1.0 / (2.0 - s))


def crossover_time(profile: BandProfile) -> float:
    """Crossover time t_inf between the stretched-exponential and
    power-law branches of the survival amplitude.

    t_inf = |2 ln(2 sin(|s-1| pi) / ((2-s) pi))|^(1/(2-s)) * t0.
    Diverges at s = 1 (only the exponential survives); returns inf there.
    """
    s = profile.s
    if not 0.0 < s < 2.0:
        raise ValueError("crossover_time requires 0 < s < 2")
    amp = 2.0 * math.sin(abs(s - 1.0) * math.pi) / ((2.0 - s) * math.pi)
    if amp == 0.0:
        return math.inf
    return abs(2.0 * math.log(amp)) ** (1.0 / (2.0 - s)) * wigner_time(profile)


def crossover_time_numeric(profile: BandProfile) -> float:
    """Actual intersection of the stretched-exponential and power-law
    survival-amplitude branches.

    Solves exp(-u/2) = A/u (u = (t/t0)^(2-s)) for the larger root and
    maps it back to a time.  When the power-law amplitude A exceeds 2/e
    the branches never cross and NaN is returned; the closed-form
    :func:`crossover_time` ignores the 1/u factor and always exists.
    """
    s = profile.s
    if not 0.0 < s < 2.0:
        raise ValueError("crossover_time_numeric requires 0 < s < 2")
    if s == 1.0:
        return math.inf
    amp = 2.0 * math.sin(abs(s - 1.0) * math.pi) / ((2.0 - s) * math.pi)
    if amp >= 2.0 / math.e:
        return math.nan

    def f(u):
        return u * math.exp(-0.5 * u) - amp

    hi = 4.0
    while f(hi) > 0.0:
        hi *= 2.0
    u_star = _bisect(f, 2.0, hi)
    return u_star ** (1.0 / (2.0 - s)) * wigner_time(profile)


# ---------------------------------------------------------------------------
# shift function
# ---------------------------------------------------------------------------

def universal_window(profile: BandProfile, margin: float = 1.0) -> tuple[float, float]:
    """Frequency window where the cutoff-free shift formula applies:
    omega_rho * e^(margin/s) << |w| << omega_c * e^(-margin/(2-s))."""
    s = profile.s
    lo = profile.omega_rho * math.exp(margin / s) if s > 0.0 else math.inf
    hi = profile.omega_c * math.exp(-margin / (2.0 - s)) if s < 2.0 else 0.0
    return lo, hi


def lamb_shift(profile: BandProfile, omega, mode: str = "auto") -> np.ndarray | float:
    """Second-order shift of the distinguished level.

    In the universal window the cutoff-free form
    ``eps^2 pi cot(s pi/2) |w|^(s-1) sgn(w)`` applies (zero at s = 1).
    Near the band edges — s within 1/ln(wc/|w|) of 2, or within
    1/ln(|w|/w_rho) of 0 — the logarithmic marginal forms take over:

    * UV marginal: ``-eps^2 w ln|1 - (wc/w)^2|``
    * IR marginal: ``eps^2 (1/w) ln|(w/w_rho)^2 - 1|``

    ``mode`` selects "auto" (per-frequency dispatch), "universal",
    "marginal-uv", or "marginal-ir".  Forcing "universal" outside its
    window emits :class:`SpectralWindowWarning`.  Odd in omega.
    """
    s, eps = profile.s, profile.epsilon
    wc, wr = profile.omega_c, profile.omega_rho
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    w = np.atleast_1d(w).astype(float)
    aw = np.abs(w)
    nz = aw > 0.0
    safe = np.where(nz, w, 1.0)
    asafe = np.abs(safe)

    with np.errstate(divide="ignore", invalid="ignore"):
        uv = -(eps**2) * w * np.log(np.abs(1.0 - (wc / safe) ** 2))
        ir = (eps**2 / safe) * np.log(np.abs((safe / wr) ** 2 - 1.0))
        if 0.0 < s < 2.0:
            cot = math.cos(0.5 * math.pi * s) / math.sin(0.5 * math.pi * s)
            uni = eps**2 * math.pi * cot * asafe ** (s - 1.0) * np.sign(w)
        else:
            uni = np.full_like(w, np.nan)
    uv = np.where(nz, uv, 0.0)
    ir = np.where(nz, ir, 0.0)
    uni = np.where(nz, uni, 0.0)

    if mode == "marginal-uv":
        out = uv
    elif mode == "marginal-ir":
        out = ir
    elif mode == "universal":
        if not 0.0 < s < 2.0:
            raise ValueError("universal shift requires 0 < s < 2")
        lo, hi = universal_window(profile)
        if np.any(nz & ((aw < lo) | (aw > hi))):
            warnings.warn("universal shift evaluated outside its window",
                          SpectralWindowWarning, stacklevel=2)
        out = uni
    elif mode == "auto":
        if s >= 2.0:
            out = uv
        elif s <= 0.0:
            out = ir
        else:
            uv_score = (2.0 - s) * np.log(wc / asafe)
            ir_score = s * np.log(asafe / wr)
            use_uv = nz & (uv_score < 1.0) & ((ir_score >= 1.0) | (uv_score <= ir_score))
            use_ir = nz & (ir_score < 1.0) & ~use_uv
            out = np.where(use_uv, uv, np.where(use_ir, ir, uni))
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return float(out[0]) if scalar else out


def lamb_shift_integral(profile: BandProfile, omega, lower: float = 0.0) -> float:
    """Principal-value continuum integral form of the shift.

    Delta(w) = PV Int (C~(x)/2 pi) / (w - x) dx, folded onto x > 0.
    Serves as the independent cross-check of the closed forms; the pole
    is handled by symmetric pairing around x = |w|.
    """
    w = float(omega)
    if w == 0.0:
        return 0.0
    s, eps, wc = profile.s, profile.epsilon, profile.omega_c
    sharp = profile.cutoff is Cutoff.SHARP
    upper = wc if sharp else max(60.0 * wc, 10.0 * abs(w))
    aw = abs(w)

    if sharp:
        def g(x):
            return x ** (s - 1.0) * 2.0 * aw / ((aw - x) * (aw + x))
    else:
        def g(x):
            return x ** (s - 1.0) * math.exp(-x / wc) * 2.0 * aw / ((aw - x) * (aw + x))

    # the shift is odd in omega: evaluate at |omega| and restore the sign
    # of the argument (the integral itself may be of either sign)
    sign = 1.0 if w > 0.0 else -1.0
    if not lower < aw < upper:
        return sign * eps**2 * _quad_geom(g, lower, upper)

    # symmetric pair regularizes the pole; geometric quadrature elsewhere
    h = min(aw - lower, upper - aw, 0.5 * aw)
    pair, _ = integrate.quad(lambda u: g(aw + u) + g(aw - u), 0.0, h, limit=300)
    below = _quad_geom(g, lower, aw - h) if aw - h > lower else 0.0
    above = _quad_geom(g, aw + h, upper) if aw + h < upper else 0.0
    return sign * eps**2 * (pair + below + above)


def lamb_shift_discrete(spec, omega: float) -> float:
    """Shift of the distinguished level from a direct two-sided lattice sum.

    Uses the expected coupling intensities eps^2 |E_n|^(s-1) / rho on the
    lattice E_n = n/rho, 1 <= |n| <= b.  ``spec`` needs attributes
    ``s``, ``epsilon``, ``rho`` and ``b``.  A collision with a lattice
    energy shifts omega by half a spacing and warns.
    """
    s, eps = float(spec.s), float(spec.epsilon)
    rho, b = float(spec.rho), int(spec.b)
    w = float(omega)

    n_near = round(abs(w) * rho)
    if 1 <= n_near <= b and abs(abs(w) * rho - n_near) < 1e-9:
        warnings.warn("omega collides with a lattice level; shifted by half a spacing",
                      UserWarning, stacklevel=2)
        w += 0.5 / rho

    total = 0.0
    chunk = 2_000_000
    for start in range(1, b + 1, chunk):
        n = np.arange(start, min(start + chunk, b + 1), dtype=float)
        e = n / rho
        wgt = eps**2 * e ** (s - 1.0) / rho
        total += float(np.sum(wgt * 2.0 * w / ((w - e) * (w + e))))
    return total


# ---------------------------------------------------------------------------
# core frequencies
# ---------------------------------------------------------------------------

def core_frequencies(profile: BandProfile) -> tuple[float, float]:
    """Core half-width gamma0 (single-row model) and core border gamma_o
    (banded model).

    gamma0 = (eps^2/|sin(s pi/2)|)^(1/(2-s)) in the universal regime,
    crossing over to wc*e^(-1/(2 eps^2)) at the s -> 2 edge and to
    eps*|ln(eps/w_rho)| at the s -> 0 edge.  gamma_o = (eps^2/(2-s))^(1/(2-s)).
    """
    s, eps = profile.s, profile.epsilon
    wc, wr = profile.omega_c, profile.omega_rho
    if not 0.0 <= s <= 2.0:
        raise ValueError("core_frequencies requires 0 <= s <= 2")
    if eps == 0.0:
        return 0.0, 0.0

    g_uv = wc * math.exp(-1.0 / (2.0 * eps**2))
    g_ir = eps * abs(math.log(eps / wr))
    if s >= 2.0:
        gamma0 = g_uv
    elif s <= 0.0:
        gamma0 = g_ir
    else:
        gamma0 = (eps**2 / math.sin(0.5 * math.pi * s)) ** (1.0 / (2.0 - s))
        # soft borders: fall back to the marginal limits when the universal
        # value escapes its own window
        if (2.0 - s) * math.log(wc / gamma0) < 1.0:
            gamma0 = g_uv
        elif gamma0 > wr and s * math.log(gamma0 / wr) < 1.0:
            gamma0 = g_ir

    if s >= 2.0:
        gamma_o = math.inf
    else:
        gamma_o = (eps**2 / (2.0 - s)) ** (1.0 / (2.0 - s))
    return gamma0, gamma_o


def tail_weight(profile: BandProfile, gamma: float) -> float:
    """Two-sided first-order weight beyond |w| = gamma:
    Int_{|w|>gamma} (C~(w)/w^2) dw / (2 pi), evaluated by quadrature."""
    s, eps, wc = profile.s, profile.epsilon, profile.omega_c
    gamma = float(gamma)
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    if profile.cutoff is Cutoff.SHARP:
        if gamma >= wc:
            return 0.0
        val = _quad_geom(lambda x: x ** (s - 3.0), gamma, wc)
    else:
        val = _quad_geom(lambda x: x ** (s - 3.0) * math.exp(-x / wc),
                         gamma, max(60.0 * wc, 2.0 * gamma))
    return 2.0 * eps**2 * val


def solve_tail_crossover(profile: BandProfile, weight: float) -> float:
    """Frequency gamma at which the first-order tail weight drops to
    ``weight``.

    The defining weight at the core border is of order unity; callers
    state the convention they need explicitly.  Bracketed bisection on
    the quadrature-evaluated weight.
    """
    if weight <= 0.0:
        raise ValueError("weight must be positive")
    if profile.epsilon == 0.0:
        raise ValueError("no tail at epsilon = 0")
    hi = profile.omega_c
    if profile.cutoff is Cutoff.EXPONENTIAL:
        while tail_weight(profile, hi) > weight:
            hi *= 4.0
    lo = hi
    while tail_weight(profile, lo) < weight:
        lo /= 4.0
        if lo < 1e-300:
            raise RuntimeError("tail weight never reaches the requested value")
    return _bisect(lambda g: tail_weight(profile, g) - weight, lo, hi)


# ---------------------------------------------------------------------------
# core border as a function of time
# ---------------------------------------------------------------------------

def core_border_of_time(profile: BandProfile, t: float, return_flag: bool = False):
    """Border frequency gamma(t) separating the formed core from the
    still-first-order tail at time t.

    Solves eps^2 [ (1/s)(t^(2-s) - gamma^s t^2) + t^(2-s)/(2-s) ] = 1/2
    by bisection, clamped to [omega_rho, gamma_o].  The border advances
    monotonically: once it reaches the gamma_o ceiling (always before
    the raw equation's turning point t* = ((2-s)/(2 eps^2))^(1/(2-s)))
    it stays there; the equation's receding branch beyond t* is outside
    the derivation's validity and is not followed.

    With ``return_flag=True`` returns ``(gamma, flag)`` where flag is
    "" (interior root), "floor", or "ceiling".
    """
    s, eps = profile.s, profile.epsilon
    if not 0.0 < s < 2.0:
        raise ValueError("core_border_of_time requires 0 < s < 2")
    if not t > 0.0:
        raise ValueError("t must be positive")
    if eps == 0.0:
        raise ValueError("no core at epsilon = 0")

    g_lo = profile.omega_rho
    _, g_hi = core_frequencies(profile)
    g_hi = max(g_hi, g_lo)

    t_star = ((2.0 - s) / (2.0 * eps**2)) ** (1.0 / (2.0 - s))
    if t >= t_star:
        return (g_hi, "ceiling") if return_flag else g_hi

    def f(g):
        return eps**2 * ((t ** (2.0 - s) - g**s * t * t) / s
                         + t ** (2.0 - s) / (2.0 - s)) - 0.5

    if f(g_lo) <= 0.0:
        return (g_lo, "floor") if return_flag else g_lo
    if f(g_hi) >= 0.0:
        return (g_hi, "ceiling") if return_flag else g_hi
    root = _bisect(f, g_lo, g_hi)
    return (root, "") if return_flag else root


# ---------------------------------------------------------------------------
# summary
# ---------------------------------------------------------------------------

def timescales(profile: BandProfile) -> TimeScales:
    """Bundle the characteristic times and frequencies of a profile.

    Warns with :class:`RegimeWarning` when the universal ordering
    t_c < t0 < t_H fails; the values are still returned.
    """
    t_h = _TWO_PI / profile.omega_rho
    t_c = _TWO_PI / profile.omega_c
    t0 = wigner_time(profile)
    t_inf = crossover_time(profile)
    gamma0, gamma_o = core_frequencies(profile)
    ts = TimeScales(t_H=t_h, t_c=t_c, t0=t0, t_inf=t_inf,
                    gamma0=gamma0, gamma_o=gamma_o)
    if not ts.in_universal_regime:
        warnings.warn(
            f"characteristic times violate t_c < t0 < t_H "
            f"(t_c={t_c:.3g}, t0={t0:.3g}, t_H={t_h:.3g})",
            RegimeWarning, stacklevel=2)
    return ts
