"""Local density of states and survival-amplitude routes.

Four independent routes to the survival amplitude c0(t) of the
distinguished level live here:

* ``fm_ldos_analytic`` + ``survival_from_ldos`` — the exact rank-two
  line shape rho(w) = (1/pi)(Gamma/2)/((w-Delta)^2 + (Gamma/2)^2) and
  its Fourier transform, evaluated on a graded mesh that respects the
  |w|^(s-1) core.
* ``ldos_numerical`` — dense diagonalization of a realized matrix,
  binned into a histogram (ensemble-averaged for the banded model).
* ``survival_volterra`` — the memory-kernel equation
  dc0/dt = -int_0^t C(t-u) c0(u) du solved by second-order product
  integration, with an O(n log^2 n) divide-and-conquer convolution.
  The kernel can come from the band profile (closed form / quadrature)
  or from a realized matrix (exact finite sum via FFT), which removes
  any cutoff ambiguity.
* ``decay_asymptotics`` — the closed-form long-time laws (stretched
  exponential, power law, and the marginal logarithmic law at s = 2).
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, replace

import numpy as np
from scipy import integrate
from scipy.linalg import eigh
from scipy.signal import fftconvolve

from .hamiltonian import CouplingMatrix, ModelKind, ModelSpec, build
from .spectral import (
    BandProfile,
    Cutoff,
    SpectralWindowWarning,
    core_frequencies,
    correlation_function,
    correlation_zero,
    lamb_shift_integral,
    spectral_function,
    wigner_time,
)

__all__ = [
    "AmplitudeSource",
    "DecayRegime",
    "LdosHistogram",
    "SurvivalAmplitude",
    "VolterraSolution",
    "decay_asymptotics",
    "fm_ldos_analytic",
    "ldos_numerical",
    "linear_bins",
    "log_bins",
    "survival_from_ldos",
    "survival_volterra",
    "volterra_solution",
]

_DENSE_DIM_LIMIT = 4000


class AmplitudeSource(enum.Enum):
    SIMULATION = "simulation"
    FT_OF_LDOS = "ft_of_ldos"
    VOLTERRA = "volterra"
    ASYMPTOTIC = "asymptotic"


class DecayRegime(enum.Enum):
    STRETCHED = "stretched"
    POWER_LAW = "power_law"
    LOG_S2 = "log_s2"


# ---------------------------------------------------------------------------
# domain types
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LdosHistogram:
    """Binned |<E_nu|0>|^2 versus E_nu, probability mass per bin."""

    edges: np.ndarray
    weights: np.ndarray
    kind: ModelKind
    n_realizations: int
    stderr: np.ndarray | None = None

    @property
    def centers(self) -> np.ndarray:
        return 0.5 * (self.edges[:-1] + self.edges[1:])

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.edges)

    def density(self) -> np.ndarray:
        return self.weights / self.widths

    @property
    def coverage(self) -> float:
        """Probability mass captured by the requested bins (<= 1)."""
        return float(np.sum(self.weights))


@dataclass(frozen=True)
class SurvivalAmplitude:
    """c0(t) samples with their provenance."""

    times: np.ndarray
    c0: np.ndarray
    source: AmplitudeSource

    def survival_probability(self) -> np.ndarray:
        return np.abs(self.c0) ** 2


@dataclass(frozen=True)
class VolterraSolution:
    """Full solver grid: c0, and dc0/dt = -int C(t-u)c0(u)du for free."""

    times: np.ndarray
    c0: np.ndarray
    dc0: np.ndarray
    kernel: np.ndarray
    dt: float


# ---------------------------------------------------------------------------
# analytic line shape
# ---------------------------------------------------------------------------

def _universal_rate_and_shift(profile: BandProfile, aw: np.ndarray):
    """Cutoff-free power-law pair: Gamma/2 = pi eps^2 |w|^(s-1) and its
    exact Hilbert partner Delta = pi eps^2 cot(s pi/2) |w|^(s-1) sgn w.
    A consistent pair makes the line shape integrate to exactly one."""
    s, eps = profile.s, profile.epsilon
    half_gamma = math.pi * eps**2 * aw ** (s - 1.0)
    delta_mag = half_gamma * math.cos(0.5 * math.pi * s) / math.sin(0.5 * math.pi * s)
    return half_gamma, delta_mag


def fm_ldos_analytic(profile: BandProfile, omega, shift: str = "universal"):
    """Exact rank-two LDOS rho(w).

    shift:
      * ``"universal"`` — cutoff-free power-law rate with its exact
        Hilbert-transform partner (valid for |w| << omega_c; normalized
        to 1 exactly).
      * ``"integral"`` — the profile's cutoff rate with the
        principal-value shift integral (slow: one quadrature per point;
        normalized to 1 up to quadrature error).
      * ``"none"`` — cutoff rate, shift set to zero (Ohmic shortcut).
    """
    if not 0.0 < profile.s < 2.0:
        raise ValueError("line shape requires 0 < s < 2")
    w = np.asarray(omega, dtype=float)
    scalar = w.ndim == 0
    w = np.atleast_1d(w)
    aw = np.abs(w)
    out = np.empty_like(w)

    if shift == "universal":
        with np.errstate(divide="ignore", invalid="ignore"):
            half_gamma, delta_mag = _universal_rate_and_shift(profile, aw)
            delta = delta_mag * np.sign(w)
            out = (half_gamma / math.pi) / ((w - delta) ** 2 + half_gamma**2)
    elif shift in ("integral", "none"):
        half_gamma = 0.5 * spectral_function(profile, w)
        if shift == "integral":
            delta = np.array([lamb_shift_integral(profile, x) for x in w])
        else:
            delta = np.zeros_like(w)
        with np.errstate(divide="ignore", invalid="ignore"):
            out = (half_gamma / math.pi) / ((w - delta) ** 2 + half_gamma**2)
    else:
        raise ValueError(f"unknown shift mode {shift!r}")

    # w = 0 limits: vanishing core for s < 1, finite for s = 1, and an
    # (integrable) divergence for s > 1
    zero = aw == 0.0
    if np.any(zero):
        if profile.s < 1.0:
            out[zero] = 0.0
        elif profile.s > 1.0:
            out[zero] = np.inf
        else:
            out[zero] = 1.0 / (math.pi**2 * profile.epsilon**2)
    out = np.where(np.isnan(out), 0.0, out)
    return float(out[0]) if scalar else out


# ---------------------------------------------------------------------------
# numerical LDOS
# ---------------------------------------------------------------------------

def linear_bins(spec: ModelSpec, n_bins: int = 161) -> np.ndarray:
    """Symmetric linear mesh covering the full realized spectrum."""
    span = spec.n_levels / spec.rho + 2.0 * math.sqrt(
        max(correlation_zero(spec.profile), 0.0)) + 1.0 / spec.rho
    return np.linspace(-span, span, n_bins + 1)


def log_bins(lo: float, hi: float, per_decade: int = 8) -> np.ndarray:
    """Geometric mesh on |w| in [lo, hi] for tail analysis."""
    if not 0.0 < lo < hi:
        raise ValueError("need 0 < lo < hi")
    n = max(2, int(round(per_decade * math.log10(hi / lo))) + 1)
    return np.geomspace(lo, hi, n)


def ldos_numerical(spec: ModelSpec, edges, seeds=None,
                   fold_abs: bool = False) -> LdosHistogram:
    """Histogram of eigenweights |<E_nu|0>|^2 from dense diagonalization.

    ``seeds`` defaults to the single realization in ``spec``; a list
    ensemble-averages (mean mass per bin, standard error across seeds).
    ``fold_abs`` bins by |E_nu| for tail analysis on a positive mesh.
    """
    edges = np.asarray(edges, dtype=float)
    if edges.ndim != 1 or edges.size < 2 or np.any(np.diff(edges) <= 0):
        raise ValueError("edges must be a 1-d ascending array")
    dim = 2 * spec.n_levels + 1
    if dim > _DENSE_DIM_LIMIT:
        raise ValueError(
            f"dense diagonalization of dimension {dim} exceeds the bound "
            f"{_DENSE_DIM_LIMIT}; reduce n_levels or switch to the "
            f"propagator/Volterra routes")
    if seeds is None:
        seeds = [spec.seed]
    per_seed = []
    for sd in seeds:
        V = build(replace(spec, seed=int(sd)))
        H = np.diag(V.energies()) + V.dense()
        w, u = eigh(H)
        weights = np.abs(u[V.index(0), :]) ** 2
        total = float(np.sum(weights))
        if abs(total - 1.0) > 1e-10:
            raise RuntimeError(
                f"eigenweight completeness violated: sum = {total!r}")
        x = np.abs(w) if fold_abs else w
        mass, _ = np.histogram(x, bins=edges, weights=weights)
        per_seed.append(mass)
    stacked = np.vstack(per_seed)
    mean = stacked.mean(axis=0)
    stderr = (stacked.std(axis=0, ddof=1) / math.sqrt(len(seeds))
              if len(seeds) > 1 else None)
    return LdosHistogram(edges=edges, weights=mean, kind=spec.kind,
                         n_realizations=len(seeds), stderr=stderr)


# ---------------------------------------------------------------------------
# Fourier transform of the LDOS
# ---------------------------------------------------------------------------

def _filon_linear_ft(nodes: np.ndarray, values: np.ndarray,
                     times: np.ndarray) -> np.ndarray:
    """int rho(w) e^{-iwt} dw for piecewise-linear rho on an arbitrary
    ascending mesh; exact per interval, Taylor fallback for small phase."""
    w0 = nodes[:-1]
    h = np.diff(nodes)
    a = values[:-1]
    bslope = np.diff(values) / h
    t = times[:, None]
    theta = t * h[None, :]
    phase0 = np.exp(-1j * t * w0[None, :])

    small = np.abs(theta) < 1e-3
    with np.errstate(divide="ignore", invalid="ignore"):
        phi = np.exp(-1j * theta)
        e1 = np.where(small, 0.0j, (1.0 - phi) / (1j * t + 0j))
        e2 = np.where(small, 0.0j, (1j * theta * phi - (1.0 - phi)) / (t**2 + 0j))
    th = np.where(small, theta, 0.0)
    e1_small = h * (1.0 - 1j * th / 2.0 - th**2 / 6.0 + 1j * th**3 / 24.0)
    e2_small = h**2 * (0.5 - 1j * th / 3.0 - th**2 / 8.0 + 1j * th**3 / 30.0)
    e1 = np.where(small, e1_small, e1)
    e2 = np.where(small, e2_small, e2)
    return np.sum(phase0 * (a * e1 + bslope * e2), axis=1)


def _analytic_ft_mesh(profile: BandProfile, t_max: float, shift: str,
                      points_per_decade: int, omega_lo, omega_hi,
                      tail_tol: float) -> np.ndarray:
    s, eps, wc = profile.s, profile.epsilon, profile.omega_c
    gamma0, _ = core_frequencies(profile)
    if omega_lo is None:
        omega_lo = 1e-12 * gamma0
        if t_max > 0.0:
            omega_lo = min(omega_lo, 1e-3 / t_max)
    if omega_hi is None:
        if shift == "universal":
            # pure power-law tail eps^2 w^(s-3): cut where the remaining
            # mass drops below tail_tol
            omega_hi = (2.0 * eps**2 / ((2.0 - s) * tail_tol)) ** (1.0 / (2.0 - s))
            omega_hi = max(omega_hi, 1e3 * gamma0)
        elif profile.cutoff is Cutoff.SHARP:
            omega_hi = wc
        else:
            omega_hi = 60.0 * wc
    if not 0.0 < omega_lo < omega_hi:
        raise ValueError("need 0 < omega_lo < omega_hi")
    n = max(8, int(round(points_per_decade * math.log10(omega_hi / omega_lo))))
    mesh = np.geomspace(omega_lo, omega_hi, n)
    if shift != "universal" and profile.cutoff is Cutoff.SHARP:
        # the shift integral varies logarithmically at the band edge:
        # refine towards omega_c from below
        edge = wc * (1.0 - np.geomspace(1e-12, 0.5, 8 * 12))
        mesh = np.unique(np.concatenate([mesh[mesh < edge.min()], edge, [wc]]))
    return mesh


def _survival_from_profile(profile: BandProfile, times: np.ndarray,
                           shift: str = "universal",
                           points_per_decade: int = 256,
                           omega_lo: float | None = None,
                           omega_hi: float | None = None,
                           tail_tol: float = 1e-10) -> np.ndarray:
    if profile.epsilon == 0.0:
        return np.ones(times.size, dtype=complex)
    t_max = float(np.max(times)) if times.size else 0.0
    mesh = _analytic_ft_mesh(profile, t_max, shift, points_per_decade,
                             omega_lo, omega_hi, tail_tol)
    rho = fm_ldos_analytic(profile, mesh, shift=shift)
    # rho is even: both half-axes give conjugate contributions
    one_sided = _filon_linear_ft(mesh, rho, times)
    # analytic remainder below the first node (core goes like w^(1-s),
    # phase ~ 1 there by construction of the mesh)
    core_mass = 2.0 * rho[0] * mesh[0] / (2.0 - profile.s)
    return 2.0 * np.real(one_sided) + core_mass


def _survival_from_histogram(hist: LdosHistogram,
                             times: np.ndarray) -> np.ndarray:
    centers = hist.centers
    widths = hist.widths
    t = times[:, None]
    # exact transform of a uniform density on each bin
    x = 0.5 * t * widths[None, :]
    window = np.sinc(x / math.pi)
    return np.sum(hist.weights[None, :] * np.exp(-1j * t * centers[None, :])
                  * window, axis=1)


def survival_from_ldos(rho, times, **kwargs) -> SurvivalAmplitude:
    """c0(t) = int rho(w) e^{-iwt} dw.

    ``rho`` is either a BandProfile (analytic line shape, graded-mesh
    Filon quadrature; kwargs: shift, points_per_decade, omega_lo,
    omega_hi, tail_tol) or an LdosHistogram (exact transform of the
    binned density).
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if isinstance(rho, BandProfile):
        c0 = _survival_from_profile(rho, times, **kwargs)
    elif isinstance(rho, LdosHistogram):
        if kwargs:
            raise TypeError("histogram transform takes no options")
        c0 = _survival_from_histogram(rho, times)
    else:
        raise TypeError("rho must be a BandProfile or an LdosHistogram")
    return SurvivalAmplitude(times=times, c0=np.asarray(c0, dtype=complex),
                             source=AmplitudeSource.FT_OF_LDOS)


# ---------------------------------------------------------------------------
# Volterra memory-kernel solver
# ---------------------------------------------------------------------------

def _volterra_solve(kernel: np.ndarray, dt: float,
                    base_block: int = 1024) -> tuple[np.ndarray, np.ndarray]:
    """Second-order product integration of
    dc/dt = -int_0^t C(t-u) c(u) du, c(0) = 1.

    Trapezoidal kernel quadrature inside an implicit-trapezoid time
    step.  History sums are accumulated divide-and-conquer: finished
    half-intervals push their contribution onto the future with one FFT
    convolution, so the total cost is O(n log^2 n) instead of O(n^2).
    Returns (c, F) where F_j = int_0^{t_j} C(t_j-u)c(u)du = -dc/dt.
    """
    n = kernel.size
    c = np.zeros(n, dtype=complex)
    f = np.zeros(n, dtype=complex)
    acc = np.zeros(n, dtype=complex)
    c[0] = 1.0
    c0k = kernel[0]
    denom = 1.0 + dt * dt * c0k / 4.0

    def direct(lo: int, hi: int) -> None:
        m0 = max(lo, 1)
        for k in range(m0, hi):
            if k > m0:
                local = np.dot(kernel[1:k - m0 + 1][::-1], c[m0:k])
            else:
                local = 0.0
            g = acc[k] + local
            rhs = c[k - 1] - 0.5 * dt * f[k - 1] \
                - 0.5 * dt * dt * (0.5 * kernel[k] + g)
            c[k] = rhs / denom
            f[k] = dt * (0.5 * kernel[k] + g + 0.5 * c0k * c[k])

    def solve(lo: int, hi: int) -> None:
        if hi - lo <= base_block:
            direct(lo, hi)
            return
        mid = (lo + hi) // 2
        solve(lo, mid)
        m0 = max(lo, 1)
        if mid > m0:
            conv = fftconvolve(c[m0:mid], kernel[1:hi - m0])
            acc[mid:hi] += conv[mid - m0 - 1: hi - m0 - 1]
        solve(mid, hi)

    solve(0, n)
    return c, f


def _realized_kernel(V: CouplingMatrix, dt_request: float,
                     t_max: float) -> tuple[np.ndarray, float]:
    """Exact finite-sum kernel C(t_j) = sum_n |V_{n,0}|^2 e^{-i E_n t_j}
    on a uniform grid, via one padded FFT.  The step is snapped to
    dt = 2 pi rho / M (M a power of two) so the finite sum becomes an
    exact DFT; past the lattice recurrence time 2 pi rho the kernel
    continues periodically, which is again exact."""
    if V.kind is not ModelKind.FRIEDRICHS:
        raise ValueError("realized kernel requires the rank-two model")
    period = 2.0 * math.pi * V.rho
    m = 1
    while period / m > dt_request:
        m *= 2
    dt = period / m
    weights = np.abs(V.row0) ** 2
    sites = np.arange(-V.half_width, V.half_width + 1)
    padded = np.zeros(m)
    np.add.at(padded, sites % m, weights)
    base = np.fft.fft(padded)
    n_steps = int(math.floor(t_max / dt)) + 2
    return base[np.arange(n_steps) % m], dt


def volterra_solution(source, t_max: float, dt: float | None = None,
                      base_block: int = 1024) -> VolterraSolution:
    """Solve the memory-kernel equation up to ``t_max``.

    ``source`` selects the kernel:
      * BandProfile — model correlation function C(t) on the grid;
      * CouplingMatrix (rank-two) — exact realized kernel, no cutoff
        ambiguity; ``dt`` is snapped to an exact-DFT-compatible value;
      * callable — C(t) evaluated on the grid (dt required).

    Refuses steps above the kernel's Nyquist limit.
    """
    if t_max <= 0.0:
        raise ValueError("t_max must be positive")
    if isinstance(source, CouplingMatrix):
        omega_max = source.half_width / source.rho
        if dt is None:
            dt = math.pi / (16.0 * omega_max)
        if dt > math.pi / omega_max:
            raise ValueError(
                f"dt = {dt:g} undersamples the kernel: need "
                f"dt <= pi/omega_max = {math.pi / omega_max:g}")
        kernel, dt = _realized_kernel(source, dt, t_max)
        n = kernel.size
        grid = dt * np.arange(n)
    elif isinstance(source, BandProfile):
        omega_max = source.omega_c
        if dt is None:
            dt = math.pi / (16.0 * omega_max)
        if dt > math.pi / omega_max:
            raise ValueError(
                f"dt = {dt:g} undersamples the kernel: need "
                f"dt <= pi/omega_c = {math.pi / omega_max:g}")
        n = int(math.floor(t_max / dt)) + 2
        grid = dt * np.arange(n)
        kernel = np.asarray(correlation_function(source, grid), dtype=complex)
    elif callable(source):
        if dt is None:
            raise ValueError("a callable kernel needs an explicit dt")
        n = int(math.floor(t_max / dt)) + 2
        grid = dt * np.arange(n)
        kernel = np.asarray(source(grid), dtype=complex)
    else:
        raise TypeError("source must be a BandProfile, a CouplingMatrix, "
                        "or a callable kernel")
    if n > 2 * 10**7:
        raise ValueError(f"{n} time steps exceed the solver budget; "
                         f"increase dt or reduce t_max")
    c, f = _volterra_solve(kernel, dt, base_block=base_block)
    return VolterraSolution(times=grid, c0=c, dc0=-f, kernel=kernel, dt=dt)


def survival_volterra(source, times, dt: float | None = None,
                      base_block: int = 1024) -> SurvivalAmplitude:
    """Memory-kernel oracle for c0 at the requested times (linear
    interpolation on the solver grid; see ``volterra_solution``)."""
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0.0):
        raise ValueError("times must be non-negative")
    sol = volterra_solution(source, float(np.max(times)) if times.size else 1.0,
                            dt=dt, base_block=base_block)
    c0 = (np.interp(times, sol.times, sol.c0.real)
          + 1j * np.interp(times, sol.times, sol.c0.imag))
    return SurvivalAmplitude(times=times, c0=c0,
                             source=AmplitudeSource.VOLTERRA)


# ---------------------------------------------------------------------------
# closed-form decay laws
# ---------------------------------------------------------------------------

def decay_asymptotics(profile: BandProfile, t, regime: DecayRegime):
    """Long-time closed forms for the survival amplitude.

    STRETCHED: c0 = exp[-(t/t0)^(2-s)/2]           (banded model)
    POWER_LAW: c0 = [2 sin((s-1)pi) / ((2-s)pi)] (t0/t)^(2-s)
               (rank-two model; the prefactor is negative for s < 1 —
               squaring for P0 removes the sign)
    LOG_S2:    c0 ~ (eps^2/pi) ln(t0/t) at s = 2, with
               t0 = e^{1/(2 eps^2)}/omega_c, valid for t_c << t << t0;
               use outside that window is flagged with a warning.
    """
    t = np.asarray(t, dtype=float)
    scalar = t.ndim == 0
    t = np.atleast_1d(t)
    s, eps = profile.s, profile.epsilon
    if regime is DecayRegime.LOG_S2:
        t0 = math.exp(1.0 / (2.0 * eps**2)) / profile.omega_c
        t_c = 1.0 / profile.omega_c
        if np.any((t < 3.0 * t_c) | (t > t0 / 3.0)):
            warnings.warn(
                "logarithmic law requested outside its window "
                f"t_c << t << t0 = {t0:g}", SpectralWindowWarning,
                stacklevel=2)
        with np.errstate(divide="ignore"):
            out = (eps**2 / math.pi) * np.log(t0 / t)
    else:
        if not 0.0 < s < 2.0:
            raise ValueError("asymptotic laws require 0 < s < 2")
        t0 = wigner_time(profile)
        if regime is DecayRegime.STRETCHED:
            out = np.exp(-0.5 * (t / t0) ** (2.0 - s))
        elif regime is DecayRegime.POWER_LAW:
            amp = 2.0 * math.sin((s - 1.0) * math.pi) / ((2.0 - s) * math.pi)
            with np.errstate(divide="ignore"):
                out = amp * (t0 / t) ** (2.0 - s)
        else:
            raise ValueError(f"unknown regime {regime!r}")
    return float(out[0]) if scalar else out
