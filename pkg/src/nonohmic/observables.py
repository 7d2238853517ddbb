"""Wavepacket observables and spreading theory.

Extracts survival probability, core width, and energy dispersion from
evolved wavepackets; evaluates the first-order and linear-response
spreading curves plus the exact rank-two result; fits stretched decay
exponents and assembles the one-parameter-scaling collapse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate
from scipy.signal import fftconvolve

from .hamiltonian import CouplingMatrix
from .ldos import VolterraSolution
from .propagator import Wavepacket
from .spectral import (
    BandProfile,
    Cutoff,
    correlation_function,
    correlation_zero,
    crossover_time_numeric,
    spectral_function,
    wigner_time,
)

_TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ObservableSample:
    """Single-time observables of one wavepacket."""

    p0: float
    de_core: float
    de_sprd: float
    e25: float
    e50: float
    e75: float


@dataclass
class ObservableSeries:
    """Time series of wavepacket observables, optionally ensemble-averaged.

    ``de_core`` is the interquartile width E75-E25 of the energy
    distribution; ``de_sprd`` the dispersion about the prepared level.
    The ``*_err`` fields are standard errors of the mean and stay None
    for single realizations.
    """

    times: np.ndarray
    p0: np.ndarray
    de_core: np.ndarray
    de_sprd: np.ndarray
    e25: np.ndarray
    e50: np.ndarray
    e75: np.ndarray
    n_realizations: int = 1
    p0_err: Optional[np.ndarray] = None
    de_core_err: Optional[np.ndarray] = None
    de_sprd_err: Optional[np.ndarray] = None

    def __post_init__(self):
        for name in ("times", "p0", "de_core", "de_sprd", "e25", "e50", "e75"):
            setattr(self, name, np.asarray(getattr(self, name), dtype=float))
        n = self.times.size
        for name in ("p0", "de_core", "de_sprd", "e25", "e50", "e75"):
            if getattr(self, name).size != n:
                raise ValueError(f"{name} must have one entry per time")
        if np.any(self.p0 < -1e-9) or np.any(self.p0 > 1.0 + 1e-9):
            raise ValueError("survival probabilities must lie in [0, 1]")
        if np.any(self.e25 > self.e50 + 1e-12) \
                or np.any(self.e50 > self.e75 + 1e-12):
            raise ValueError("percentiles must be ordered: E25 <= E50 <= E75")


@dataclass(frozen=True)
class StretchFit:
    """Least-squares fit of P0(t) = exp[-t^alpha] on a log-log window."""

    alpha: float
    stderr: float
    window: tuple
    n_points: int


@dataclass(frozen=True)
class CoreScalingResult:
    """Scatter pairs for the one-parameter-scaling collapse.

    One point per saturated run: the time at which the core width first
    exceeds half its saturation value, against the inverse saturation.
    Non-saturated runs are listed in ``excluded`` and emit no point.
    """

    departure_times: np.ndarray
    inverse_saturations: np.ndarray
    saturations: np.ndarray
    kept: list = field(default_factory=list)
    excluded: list = field(default_factory=list)


# ---------------------------------------------------------------------------
# wavepacket measurement
# ---------------------------------------------------------------------------

def _percentiles(energies: np.ndarray, probs: np.ndarray, qs) -> list:
    """Inverse of the lattice cumulative distribution.

    The cumulative is a step function jumping at each occupied site; a
    quantile landing inside a jump returns that site's energy, while a
    quantile hitting a plateau returns the plateau midpoint (so the
    median of a symmetric distribution is 0 even with no central mass).
    Plateau hits are detected with a small tolerance: rounding in the
    cumulative sum must not break the symmetry of hand-built cases.
    """
    cum = np.cumsum(probs)
    cum /= cum[-1]
    last = energies.size - 1
    tol = 1e-9
    out = []
    for q in qs:
        i = min(int(np.searchsorted(cum, q - tol, side="left")), last)
        if abs(cum[i] - q) <= tol:
            j = min(int(np.searchsorted(cum, q + tol, side="left")), last)
            out.append(0.5 * (energies[i] + energies[j]))
        else:
            out.append(float(energies[i]))
    return out


def measure(psi: Wavepacket) -> ObservableSample:
    """P0, interquartile core width, and dispersion of one wavepacket.

    Energies are measured from the prepared level (E_0 = 0), so the
    dispersion is [sum_n E_n^2 P_n]^(1/2).
    """
    probs = psi.probabilities()
    total = float(probs.sum())
    if abs(total - 1.0) > 1e-6:
        raise ValueError(f"wavepacket must be normalized (got {total:.8f})")
    energies = np.arange(-psi.half_width, psi.half_width + 1,
                         dtype=float) / psi.rho
    de_sprd = math.sqrt(float(np.dot(energies**2, probs)))
    e25, e50, e75 = _percentiles(energies, probs, (0.25, 0.50, 0.75))
    return ObservableSample(p0=psi.survival_probability(),
                            de_core=e75 - e25, de_sprd=de_sprd,
                            e25=e25, e50=e50, e75=e75)


def series_from_samples(times, samples: Sequence[ObservableSample],
                        ) -> ObservableSeries:
    """Assemble single-realization samples into a series."""
    times = np.asarray(times, dtype=float)
    if times.size != len(samples):
        raise ValueError("one sample per time is required")
    cols = {name: np.array([getattr(s, name) for s in samples])
            for name in ("p0", "de_core", "de_sprd", "e25", "e50", "e75")}
    return ObservableSeries(times=times, **cols)


# ---------------------------------------------------------------------------
# first-order distribution of the spread component
# ---------------------------------------------------------------------------

def fopt_distribution(profile: BandProfile, omega, t: float):
    """First-order energy distribution at time t.

    Returns ``(tail, delta_weight)``: the smooth tail density
    band(w)/(2 pi w^2) * [2 sin(w t / 2)]^2 evaluated at ``omega``, and
    the weight of the remaining delta component at the origin (one
    minus the two-sided tail mass).  Valid for t well below the decay
    time; validity is the caller's concern.
    """
    w = np.asarray(omega, dtype=float)
    if t == 0.0:
        return np.zeros_like(w), 1.0
    # [2 sin(w t/2) / w]^2 -> t^2 as w -> 0
    with np.errstate(divide="ignore", invalid="ignore"):
        osc = np.where(w == 0.0, t * t, (2.0 * np.sin(0.5 * w * t)
                                         / np.where(w == 0.0, 1.0, w)) ** 2)
    tail = spectral_function(profile, w) * osc / _TWO_PI
    return tail, 1.0 - _fopt_tail_mass(profile, t)


def _fopt_tail_mass(profile: BandProfile, t: float) -> float:
    """Two-sided integral of the first-order tail density."""
    upper = profile.omega_c if profile.cutoff is Cutoff.SHARP \
        else 60.0 * profile.omega_c

    def full(w):
        return spectral_function(profile, w) / (math.pi * w * w) \
            * (1.0 - math.cos(w * t))

    # below ~1/t the integrand is smooth; above, split off the
    # oscillation and integrate it with the cosine-weighted rule
    a = min(1.0 / t, upper)
    low, _ = integrate.quad(full, 0.0, a, limit=400)
    high = 0.0
    if a < upper:
        def base(w):
            return spectral_function(profile, w) / (math.pi * w * w)

        plain, _ = integrate.quad(base, a, upper, limit=400)
        osc, _ = integrate.quad(base, a, upper, weight="cos", wvar=t,
                                limit=400)
        high = plain - osc
    return 2.0 * (low + high)    # the density is even in omega


# ---------------------------------------------------------------------------
# spreading theory
# ---------------------------------------------------------------------------

SpreadingSource = Union[BandProfile, CouplingMatrix, Callable[[float], float]]


def spreading_lrt(source: SpreadingSource, times) -> np.ndarray:
    """Linear-response spreading [2(C(0) - Re C(t))]^(1/2).

    ``source`` may be a band profile (closed-form autocorrelation), a
    sampled coupling matrix (realized spectral sum over row 0), or a
    callable t -> C(t).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if isinstance(source, BandProfile):
        c_zero = correlation_zero(source)
        ct = np.array([correlation_function(source, t) for t in times])
    elif isinstance(source, CouplingMatrix):
        v2 = source.row0_vector() ** 2
        energies = source.energies()
        c_zero = float(v2.sum())
        ct = np.cos(np.outer(times, energies)) @ v2
    elif callable(source):
        c_zero = float(np.real(source(0.0)))
        ct = np.array([np.real(source(t)) for t in times])
    else:
        raise TypeError("source must be a profile, a coupling matrix, "
                        "or a callable C(t)")
    return np.sqrt(np.clip(2.0 * (c_zero - np.real(ct)), 0.0, None))


def spreading_fm_exact(solution: VolterraSolution, c_zero: float):
    """Exact rank-two spreading from the survival amplitude.

    Evaluates [(1 + c0^2) C(0) - dc0^2 + 2 c0 ddc0]^(1/2) on the
    solution grid.  The second derivative comes from differentiating
    the memory-kernel equation (ddc0 = -C - C * dc0), which is exact at
    t = 0 where the radicand vanishes identically.  Returns the curve
    and the largest imaginary residue of the bracket as a diagnostic.
    """
    c0, dc0, dt = solution.c0, solution.dc0, solution.dt
    kernel = np.asarray(solution.kernel)[: c0.size]
    if kernel.size != c0.size:
        raise ValueError("kernel and amplitude grids must match")
    conv = fftconvolve(kernel, dc0)[: c0.size]
    conv -= 0.5 * (kernel[0] * dc0 + kernel * dc0[0])
    ddc0 = -(kernel + dt * conv)

    bracket = (1.0 + c0 * c0) * c_zero - dc0 * dc0 + 2.0 * c0 * ddc0
    residue = float(np.max(np.abs(np.imag(bracket))))
    radicand = np.real(bracket)
    floor = -1e-6 * abs(c_zero)
    if radicand.min() < floor:
        raise RuntimeError(
            f"negative spreading radicand {radicand.min():.3e} at "
            f"t = {solution.times[int(np.argmin(radicand))]:.4g}; the "
            "amplitude and kernel inputs are inconsistent")
    return np.sqrt(np.clip(radicand, 0.0, None)), residue


def saturation_theory(profile: BandProfile, finite_spacing: bool = False,
                      ) -> float:
    """Long-time spreading level [2 eps^2 (w_c^s - w_rho^s) / s]^(1/2).

    The subtraction accounts for the finite level spacing and is
    applied only when ``finite_spacing`` is set.  The value follows the
    sharp-cutoff normalization; comparisons against sampled matrices
    should rescale by the realized C(0) instead.
    """
    s, eps = profile.s, profile.epsilon
    top = profile.omega_c ** s
    if finite_spacing:
        top -= profile.omega_rho ** s
    return math.sqrt(2.0 * eps**2 * top / s)


# ---------------------------------------------------------------------------
# decay-exponent fit
# ---------------------------------------------------------------------------

def fit_stretch_exponent(series: ObservableSeries, window=None, *,
                         profile: Optional[BandProfile] = None) -> StretchFit:
    """Fit P0(t) = exp[-t^alpha] by least squares of ln(-ln P0) vs ln t.

    Without an explicit window the fit runs over [2 t0, min(t_inf,
    50 t0)], the exponential-like segment between the transient and the
    power-law takeover; that default needs ``profile``.  The takeover
    bound is the actual branch intersection, so when the power-law
    branch never undercuts the stretched one (strongly non-Ohmic
    exponents) the window simply runs to 50 t0.
    """
    if window is None:
        if profile is None:
            raise ValueError("automatic window selection needs the profile")
        t0 = wigner_time(profile)
        hi = 50.0 * t0
        t_inf = crossover_time_numeric(profile)
        if math.isfinite(t_inf):
            hi = min(hi, t_inf)
        window = (2.0 * t0, hi)
    lo, hi = window
    mask = (series.times >= lo) & (series.times <= hi) \
        & (series.p0 > 0.0) & (series.p0 < 1.0)
    if int(mask.sum()) < 8:
        raise ValueError(f"only {int(mask.sum())} usable points in "
                         f"[{lo:.4g}, {hi:.4g}]; need at least 8")
    x = np.log(series.times[mask])
    y = np.log(-np.log(series.p0[mask]))
    coef, cov = np.polyfit(x, y, 1, cov=True)
    return StretchFit(alpha=float(coef[0]), stderr=float(math.sqrt(cov[0, 0])),
                      window=(float(lo), float(hi)), n_points=int(mask.sum()))


# ---------------------------------------------------------------------------
# one-parameter scaling of the core width
# ---------------------------------------------------------------------------

def core_scaling_analysis(runs: Sequence[ObservableSeries],
                          ) -> CoreScalingResult:
    """Collapse scatter: core-width departure time vs inverse saturation.

    Each saturated run contributes (first time de_core exceeds half its
    saturation, 1/saturation); the saturation is the median over the
    last time decade.  Runs that have not saturated -- still trending
    in the last decade, or already above half-saturation at the first
    sample -- are excluded.
    """
    runs = list(runs)
    if len(runs) < 4:
        raise ValueError("the collapse needs at least four runs")
    deps, sats, kept, excluded = [], [], [], []
    for i, run in enumerate(runs):
        t, w = run.times, run.de_core
        tail = t >= 0.1 * t[-1]
        if int(tail.sum()) < 4:
            excluded.append(i)
            continue
        sat = float(np.median(w[tail]))
        # stationarity check: the two geometric halves of the last
        # decade must agree, otherwise the run is still trending
        late = t >= math.sqrt(0.1) * t[-1]
        first = float(np.median(w[tail & ~late]))
        second = float(np.median(w[late]))
        if sat <= 0.0 or abs(second - first) > 0.15 * sat:
            excluded.append(i)
            continue
        above = w > 0.5 * sat
        if not above.any() or above[0]:
            excluded.append(i)        # departure outside the sampled window
            continue
        k = int(np.argmax(above))
        dep = float(np.interp(0.5 * sat, w[k - 1: k + 1], t[k - 1: k + 1]))
        deps.append(dep)
        sats.append(sat)
        kept.append(i)
    sats = np.asarray(sats)
    return CoreScalingResult(departure_times=np.asarray(deps),
                             inverse_saturations=1.0 / sats,
                             saturations=sats, kept=kept, excluded=excluded)
