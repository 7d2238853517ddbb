"""Schroedinger propagation of a wavepacket on the (self-expanding) lattice.

Two interchangeable engines integrate ``i dpsi/dt = H psi`` with
``H = diag(E_n) + V``:

* ``"eigh"`` — dense eigendecomposition, exact up to roundoff; the
  default for moderate lattices and the oracle for everything else.
* ``"chebyshev"`` — polynomial expansion of ``exp(-iHt)`` over the
  banded matrix-vector product.  The expansion coefficients are Bessel
  functions of the (scaled) time step, truncated where their tail drops
  below the error budget, so accuracy is set by machine precision
  rather than by a step size.

The Chebyshev engine needs an interval enclosing the spectrum.  For the
rank-two model the exact bound ``[min E - |v|, max E + |v|]`` is used;
for banded matrices a Lanczos estimate with a safety pad, capped by the
always-safe Gershgorin disc bound.  A runaway-norm guard detects an
underestimated interval, retries once with the Gershgorin bound, and
aborts loudly if that still fails.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy import special
from scipy.sparse.linalg import LinearOperator, eigsh

from .hamiltonian import CouplingMatrix, ModelKind, ModelSpec, build

__all__ = [
    "Wavepacket",
    "LatticeHamiltonian",
    "evolve",
    "expand_if_needed",
    "iter_evolution",
]

_EIGH_MAX_SIZE = 4096        # auto engine switches to chebyshev above this
_NORM_DRIFT_BUDGET = 1e-9    # per-step relative norm drift before retry


# ---------------------------------------------------------------------------
# wavepacket
# ---------------------------------------------------------------------------

@dataclass
class Wavepacket:
    """Complex amplitudes over the lattice [-half_width, half_width] at
    time t."""

    amplitudes: np.ndarray
    half_width: int
    rho: float
    t: float = 0.0

    @staticmethod
    def initial(half_width: int, rho: float) -> "Wavepacket":
        """The distinguished-level packet psi_n(0) = delta_{n,0}."""
        amp = np.zeros(2 * half_width + 1, dtype=complex)
        amp[half_width] = 1.0
        return Wavepacket(amplitudes=amp, half_width=half_width, rho=rho, t=0.0)

    def index(self, n: int) -> int:
        if abs(n) > self.half_width:
            raise IndexError(f"site {n} outside lattice +-{self.half_width}")
        return n + self.half_width

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def survival_probability(self) -> float:
        """P0 = |psi_0|^2."""
        return float(np.abs(self.amplitudes[self.index(0)]) ** 2)

    def edge_probability(self) -> float:
        p = self.probabilities()
        return float(max(p[0], p[-1]))


# ---------------------------------------------------------------------------
# Hamiltonian wrapper
# ---------------------------------------------------------------------------

class LatticeHamiltonian:
    """diag(E_n) + V with an O(N b) (or O(N), rank-two) matvec."""

    def __init__(self, V: CouplingMatrix):
        self.V = V
        self.rho = V.rho
        self.energies = V.energies()
        self._bounds: tuple[float, float] | None = None
        self._eig: tuple[np.ndarray, np.ndarray] | None = None
        if V.kind is ModelKind.WIGNER:
            self._vmat = V.coupling_dia().tocsr()
            self._row0 = None
        else:
            self._vmat = None
            self._row0 = V.row0
            self._n0 = V.index(0)

    @property
    def size(self) -> int:
        return self.V.size

    def apply(self, x: np.ndarray) -> np.ndarray:
        """H @ x."""
        if self._row0 is not None:
            out = self.energies * x
            out += self._row0 * x[self._n0]
            out[self._n0] += np.dot(self._row0, x)
            return out
        return self.energies * x + self._vmat.dot(x)

    def dense(self) -> np.ndarray:
        return np.diag(self.energies) + self.V.dense()

    def eigensystem(self) -> tuple[np.ndarray, np.ndarray]:
        """Cached dense eigendecomposition (w, U)."""
        if self._eig is None:
            from scipy.linalg import eigh
            self._eig = eigh(self.dense())
        return self._eig

    # -- spectral bounds ----------------------------------------------------

    def gershgorin_bounds(self) -> tuple[float, float]:
        """Safe enclosure from Gershgorin discs (can be very loose for the
        rank-two model, where row 0 concentrates the whole coupling)."""
        n = self.size
        radius = np.zeros(n)
        if self._row0 is not None:
            a = np.abs(self._row0)
            radius += a                       # column 0 contribution
            radius[self._n0] = np.sum(a)      # row 0 sums all couplings
        else:
            for d in range(1, self.V.b + 1):
                vals = np.abs(self.V.bands[d - 1, : n - d])
                radius[: n - d] += vals
                radius[d:] += vals
        lo = float(np.min(self.energies - radius))
        hi = float(np.max(self.energies + radius))
        return lo, hi

    def bounds(self) -> tuple[float, float]:
        """Tight spectral enclosure with a small safety pad."""
        if self._bounds is not None:
            return self._bounds
        if self._row0 is not None:
            # rank-two coupling: ||V||_2 equals the row norm exactly
            vnorm = float(np.linalg.norm(self._row0))
            lo = float(self.energies[0]) - vnorm
            hi = float(self.energies[-1]) + vnorm
            pad = 1e-12 * max(1.0, hi - lo)
        else:
            try:
                op = LinearOperator((self.size, self.size),
                                    matvec=self.apply, dtype=float)
                hi = float(eigsh(op, k=1, which="LA", tol=1e-4,
                                 return_eigenvectors=False)[0])
                lo = float(eigsh(op, k=1, which="SA", tol=1e-4,
                                 return_eigenvectors=False)[0])
                pad = 0.03 * (hi - lo) + 1e-12
            except Exception:
                lo, hi = self.gershgorin_bounds()
                pad = 1e-12 * max(1.0, hi - lo)
        g_lo, g_hi = self.gershgorin_bounds()
        self._bounds = (max(lo - pad, g_lo), min(hi + pad, g_hi))
        return self._bounds


# ---------------------------------------------------------------------------
# Chebyshev engine
# ---------------------------------------------------------------------------

class _BoundsRunaway(RuntimeError):
    """Internal: the polynomial recurrence exceeded the unit-sphere budget,
    i.e. the spectrum is not inside the supplied interval."""


def _chebyshev_coefficients(x: float, tail_tol: float) -> np.ndarray:
    """Coefficients (2 - delta_k0) (-i)^k J_k(x), truncated where the
    remaining |coefficient| tail falls below ``tail_tol``."""
    if x == 0.0:
        return np.ones(1, dtype=complex)
    kmax = int(x + 16.0 * (x ** (1.0 / 3.0) + 1.0)) + 24
    while True:
        k = np.arange(kmax + 1)
        j = special.jv(k, x)
        mags = np.abs(j)
        mags[1:] *= 2.0
        tail = np.cumsum(mags[::-1])[::-1]
        if tail[-1] < tail_tol or not np.isfinite(tail[-1]):
            break
        kmax = int(1.5 * kmax) + 16
    keep = np.nonzero(tail > tail_tol)[0]
    kcut = int(keep[-1]) + 2 if keep.size else 1
    kcut = min(kcut, kmax + 1)
    coef = j[:kcut].astype(complex)
    coef[1:] *= 2.0
    coef *= (-1j) ** (np.arange(kcut) % 4)
    return coef


def _chebyshev_step(amp: np.ndarray, apply_h, lo: float, hi: float,
                    dt: float, tail_tol: float) -> np.ndarray:
    """exp(-i H dt) @ amp for a spectrum inside [lo, hi]."""
    c = 0.5 * (hi + lo)
    h = 0.5 * (hi - lo)
    if h <= 0.0:
        return amp * np.exp(-1j * c * dt)
    coef = _chebyshev_coefficients(h * dt, tail_tol)
    budget = 4.0 * np.linalg.norm(amp) + 1e-300

    phi_prev = amp
    out = coef[0] * phi_prev
    if len(coef) > 1:
        phi = (apply_h(amp) - c * amp) / h
        out = out + coef[1] * phi
        for k in range(2, len(coef)):
            phi_next = 2.0 * (apply_h(phi) - c * phi) / h - phi_prev
            out += coef[k] * phi_next
            phi_prev, phi = phi, phi_next
            if k % 64 == 0 and np.linalg.norm(phi) > budget:
                raise _BoundsRunaway(
                    f"recurrence norm exploded at order {k}: spectral "
                    f"interval [{lo:g}, {hi:g}] does not enclose the spectrum")
    return np.exp(-1j * c * dt) * out


# ---------------------------------------------------------------------------
# evolve
# ---------------------------------------------------------------------------

def _resolve_engine(engine: str, n: int) -> str:
    if engine == "auto":
        return "eigh" if n <= _EIGH_MAX_SIZE else "chebyshev"
    if engine in ("eigh", "chebyshev"):
        return engine
    raise ValueError(f"unknown engine {engine!r}")


def evolve(psi: Wavepacket, H: LatticeHamiltonian, t_target: float,
           tol: float = 1e-10, engine: str = "auto") -> Wavepacket:
    """Propagate to ``t_target`` (>= psi.t) with global error <= tol.

    Deterministic; norm drift is monitored and an underestimated
    spectral interval aborts with a diagnostic instead of returning a
    silently wrong packet.
    """
    if not 0.0 < tol <= 1e-4:
        raise ValueError("tol must lie in (0, 1e-4]")
    if t_target < psi.t:
        raise ValueError("t_target must be >= current packet time")
    if H.size != psi.amplitudes.size:
        raise ValueError("packet and Hamiltonian live on different lattices")
    dt = t_target - psi.t
    if dt == 0.0:
        return replace(psi, amplitudes=psi.amplitudes.copy())

    eng = _resolve_engine(engine, H.size)
    if eng == "eigh":
        w, u = H.eigensystem()
        amp = u @ (np.exp(-1j * w * dt) * (u.conj().T @ psi.amplitudes))
    else:
        tail_tol = 0.1 * tol
        norm_in = np.linalg.norm(psi.amplitudes)
        budget = _NORM_DRIFT_BUDGET * norm_in
        lo, hi = H.bounds()
        try:
            amp = _chebyshev_step(psi.amplitudes, H.apply, lo, hi, dt, tail_tol)
            norm_out = np.linalg.norm(amp)
            if not np.isfinite(norm_out) or abs(norm_out - norm_in) > budget:
                raise _BoundsRunaway("norm drift beyond budget")
        except _BoundsRunaway:
            # one retry with the always-safe disc bound
            diagnostic = (
                "propagation failed: norm drift persists even with the "
                "Gershgorin enclosure; the Hamiltonian is likely corrupt "
                "(NaN/Inf entries?)")
            g_lo, g_hi = H.gershgorin_bounds()
            if not (np.isfinite(g_lo) and np.isfinite(g_hi)):
                raise RuntimeError(diagnostic)
            try:
                amp = _chebyshev_step(psi.amplitudes, H.apply, g_lo, g_hi,
                                      dt, tail_tol)
            except _BoundsRunaway as exc:
                raise RuntimeError(diagnostic) from exc
            norm_out = np.linalg.norm(amp)
            if not np.isfinite(norm_out) or abs(norm_out - norm_in) > budget:
                raise RuntimeError(diagnostic)
    return Wavepacket(amplitudes=amp, half_width=psi.half_width,
                      rho=psi.rho, t=t_target)


# ---------------------------------------------------------------------------
# self-expansion
# ---------------------------------------------------------------------------

def expand_if_needed(psi: Wavepacket, spec: ModelSpec,
                     threshold: float = 1e-12, growth: int | None = None):
    """Grow the lattice when probability reaches the edge sites.

    Returns ``(psi, None)`` when no growth is needed; otherwise a
    zero-padded packet and the rebuilt coupling matrix on the larger
    window (``growth`` sites per edge, default 10 b).  The rank-two
    model never grows once the window covers the reachable band.
    """
    if spec.kind is ModelKind.FRIEDRICHS and psi.half_width >= spec.b:
        return psi, None
    if psi.edge_probability() <= threshold:
        return psi, None
    step = 10 * spec.b if growth is None else int(growth)
    if step < 1:
        raise ValueError("growth must be >= 1")
    new_hw = psi.half_width + step
    amp = np.zeros(2 * new_hw + 1, dtype=complex)
    amp[step: step + psi.amplitudes.size] = psi.amplitudes
    grown = Wavepacket(amplitudes=amp, half_width=new_hw, rho=psi.rho, t=psi.t)
    return grown, build(spec, half_width=new_hw)


def iter_evolution(spec: ModelSpec, times, tol: float = 1e-10,
                   engine: str = "auto", expand: bool = True,
                   threshold: float = 1e-12, growth: int | None = None):
    """Yield the wavepacket at each requested time (ascending).

    Builds the seeded matrix, starts from the delta packet, steps from
    sample time to sample time, and applies the edge-growth rule at
    every sampling time.  The yielded packet is a live view; measure it
    before advancing the iterator.
    """
    times = list(times)
    if any(b < a for a, b in zip(times, times[1:])):
        raise ValueError("times must be ascending")
    V = build(spec)
    H = LatticeHamiltonian(V)
    psi = Wavepacket.initial(V.half_width, V.rho)
    for t in times:
        psi = evolve(psi, H, t, tol=tol, engine=engine)
        if expand:
            psi, grown = expand_if_needed(psi, spec, threshold=threshold,
                                          growth=growth)
            if grown is not None:
                H = LatticeHamiltonian(grown)
        yield psi
