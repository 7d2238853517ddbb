"""Seeded construction of the coupled-level matrices on an energy lattice.

Two model kinds share one disorder recipe:

* ``FRIEDRICHS`` — the distinguished level couples to every in-band
  lattice level through row/column 0 only (a rank-two coupling matrix);
  out-of-band levels can never be reached, so the lattice never grows.
* ``WIGNER`` — a full banded random coupling with half-width ``b``;
  the wavepacket can diffuse along the lattice, so the window grows on
  demand.

Element values are derived from a counter-based stream keyed by
``(seed, |n - m|)`` and indexed by the position ``min(n, m)`` along the
diagonal: one counter block per element.  The value of any element is
therefore a pure function of the spec and the element's coordinates,
independent of the window in which it is generated — extending the
lattice reproduces existing elements bit for bit.
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass

import numpy as np
from scipy import sparse
from scipy.special import ndtri

from .spectral import BandProfile

__all__ = [
    "ModelKind",
    "ModelSpec",
    "CouplingMatrix",
    "RealizedSums",
    "build",
    "extend",
    "realized_spectral_sums",
    "dump",
]

# lattice indices are signed; counters are not.  Center the stream
# position far from zero so any realistic window stays addressable.
_POS_OFFSET = 1 << 50


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------

class ModelKind(enum.Enum):
    """Coupling topology of the model matrix."""

    FRIEDRICHS = "friedrichs"   # rank-two: row/column 0 only
    WIGNER = "wigner"           # full banded random coupling


@dataclass(frozen=True)
class ModelSpec:
    """Complete, seedable description of one disorder realization.

    Parameters
    ----------
    kind : ModelKind
    profile : BandProfile
        Continuum band profile; its ``omega_rho`` must equal ``1/rho``.
    rho : float
        Density of states (levels per unit energy).
    b : int
        Dimensionless bandwidth, ``b = rho * omega_c``; couplings exist
        only for ``0 < |n - m| <= b``.
    n_levels : int
        Initial lattice half-width: sites n in [-n_levels, n_levels].
    seed : int
        64-bit stream seed; same seed, same matrix, always.
    """

    kind: ModelKind
    profile: BandProfile
    rho: float
    b: int
    n_levels: int
    seed: int

    def __post_init__(self) -> None:
        if int(self.b) != self.b or self.b < 1:
            raise ValueError("b must be an integer >= 1")
        if int(self.n_levels) != self.n_levels or self.n_levels < 1:
            raise ValueError("n_levels must be an integer >= 1")
        if not self.rho > 0.0:
            raise ValueError("rho must be positive")
        if abs(self.rho * self.profile.omega_rho - 1.0) > 1e-9:
            raise ValueError("rho must equal 1/profile.omega_rho")
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must fit in 64 bits")

    @staticmethod
    def from_profile(kind: ModelKind, profile: BandProfile,
                     n_levels: int | None = None, seed: int = 0) -> "ModelSpec":
        """Derive lattice parameters from a band profile.

        ``b = round(rho * omega_c)``; the default window is the reachable
        span for the rank-two model and twice the bandwidth otherwise.
        """
        rho = profile.rho
        b = max(1, int(round(rho * profile.omega_c)))
        if n_levels is None:
            n_levels = b if kind is ModelKind.FRIEDRICHS else 2 * b
        return ModelSpec(kind=kind, profile=profile, rho=rho, b=b,
                         n_levels=int(n_levels), seed=int(seed))

    # convenience pass-throughs (used by the discrete shift sum and sigma law)
    @property
    def s(self) -> float:
        return self.profile.s

    @property
    def epsilon(self) -> float:
        return self.profile.epsilon

    def sigma(self, d: int) -> float:
        """Standard deviation of elements with |n - m| = d:
        variance = eps^2 |E_n - E_m|^(s-1) / rho."""
        gap = d / self.rho
        return self.epsilon * gap ** (0.5 * (self.s - 1.0)) / np.sqrt(self.rho)


@dataclass(frozen=True)
class CouplingMatrix:
    """Symmetric coupling matrix on the lattice [-half_width, half_width].

    The diagonal is identically zero.  Storage depends on the kind:
    ``row0`` holds V_{n,0} for the rank-two model; ``bands`` holds the
    upper diagonals for the banded model, ``bands[d-1, i]`` being the
    element between lattice sites ``i - half_width`` and
    ``i - half_width + d`` (tail entries padded with zeros).
    """

    kind: ModelKind
    b: int
    rho: float
    half_width: int
    row0: np.ndarray | None = None
    bands: np.ndarray | None = None

    @property
    def size(self) -> int:
        return 2 * self.half_width + 1

    def index(self, n: int) -> int:
        """Array index of lattice site n."""
        if abs(n) > self.half_width:
            raise IndexError(f"site {n} outside lattice +-{self.half_width}")
        return n + self.half_width

    def energies(self) -> np.ndarray:
        """Diagonal lattice energies E_n = n/rho."""
        return np.arange(-self.half_width, self.half_width + 1, dtype=float) / self.rho

    def element(self, n: int, m: int) -> float:
        """Value of V_{nm} (symmetric; zero outside the band and on the
        diagonal)."""
        if n == m or abs(n - m) > self.b:
            return 0.0
        if self.kind is ModelKind.FRIEDRICHS:
            if n != 0 and m != 0:
                return 0.0
            other = m if n == 0 else n
            return float(self.row0[self.index(other)])
        lo, hi = sorted((n, m))
        return float(self.bands[hi - lo - 1, self.index(lo)])

    def row0_vector(self) -> np.ndarray:
        """V_{n,0} over the lattice (couplings of the distinguished level)."""
        if self.kind is ModelKind.FRIEDRICHS:
            return self.row0.copy()
        n0 = self.index(0)
        out = np.zeros(self.size)
        for d in range(1, self.b + 1):
            if d <= self.half_width:
                out[n0 + d] = self.bands[d - 1, n0]
                out[n0 - d] = self.bands[d - 1, n0 - d]
        return out

    def dense(self) -> np.ndarray:
        """Full dense V (small lattices only)."""
        n = self.size
        out = np.zeros((n, n))
        if self.kind is ModelKind.FRIEDRICHS:
            n0 = self.index(0)
            out[n0, :] = self.row0
            out[:, n0] = self.row0
            out[n0, n0] = 0.0
        else:
            for d in range(1, self.b + 1):
                vals = self.bands[d - 1, : n - d]
                ii = np.arange(n - d)
                out[ii, ii + d] = vals
                out[ii + d, ii] = vals
        return out

    def coupling_dia(self) -> sparse.dia_matrix:
        """V as a symmetric diagonal-offset sparse matrix (banded kind)."""
        if self.kind is not ModelKind.WIGNER:
            raise ValueError("diagonal-offset storage only for the banded kind")
        n = self.size
        offsets, data = [], []
        for d in range(1, self.b + 1):
            row = np.zeros(n)
            row[d:] = self.bands[d - 1, : n - d]     # upper diag, dia layout
            offsets.append(d)
            data.append(row)
            row = np.zeros(n)
            row[: n - d] = self.bands[d - 1, : n - d]
            offsets.append(-d)
            data.append(row)
        return sparse.dia_matrix((np.array(data), np.array(offsets)), shape=(n, n))


@dataclass(frozen=True)
class RealizedSums:
    """Spectral sums of the sampled row-0 couplings.

    ``c0`` is the realized C(0) = sum_n |V_{n,0}|^2 (ensemble mean when
    several matrices are given); ``omega``/``chat`` give a geometrically
    binned estimate of the realized spectral function 2 pi rho |V|^2,
    with ``counts`` elements per bin.
    """

    c0: float
    omega: np.ndarray
    chat: np.ndarray
    counts: np.ndarray


# ---------------------------------------------------------------------------
# seeded element streams
# ---------------------------------------------------------------------------

def _gaussian_run(seed: int, d: int, start: int, count: int, sigma: float) -> np.ndarray:
    """``count`` Gaussian elements of diagonal ``d`` starting at position
    ``start`` (the smaller lattice index of the pair).

    One counter block per element; the first 64-bit word of each block is
    mapped to an open-(0,1) uniform and through the normal quantile.
    """
    key = np.random.SeedSequence([int(seed), int(d)]).generate_state(2, np.uint64)
    bg = np.random.Philox(key=int(key[0]) | (int(key[1]) << 64))
    bg.advance(_POS_OFFSET + start)
    raw = np.asarray(bg.random_raw(4 * count), dtype=np.uint64).reshape(count, 4)[:, 0]
    u = (raw >> np.uint64(11)).astype(np.float64) * 2.0**-53 + 2.0**-54
    return ndtri(u) * sigma


def build(spec: ModelSpec, half_width: int | None = None) -> CouplingMatrix:
    """Construct the coupling matrix on [-half_width, half_width].

    Pure in (spec, half_width): the same element coordinates yield the
    same value in any window, so windows of different sizes agree on
    their overlap bit for bit.
    """
    hw = spec.n_levels if half_width is None else int(half_width)
    if hw < 1:
        raise ValueError("half_width must be >= 1")
    n = 2 * hw + 1

    if spec.kind is ModelKind.FRIEDRICHS:
        row0 = np.zeros(n)
        for d in range(1, min(spec.b, hw) + 1):
            sig = spec.sigma(d)
            # element (-d, 0) lives at position -d; element (0, +d) at 0
            row0[hw - d] = _gaussian_run(spec.seed, d, -d, 1, sig)[0]
            row0[hw + d] = _gaussian_run(spec.seed, d, 0, 1, sig)[0]
        return CouplingMatrix(kind=spec.kind, b=spec.b, rho=spec.rho,
                              half_width=hw, row0=row0)

    bands = np.zeros((spec.b, n))
    for d in range(1, spec.b + 1):
        count = n - d
        if count <= 0:
            break
        bands[d - 1, :count] = _gaussian_run(spec.seed, d, -hw, count, spec.sigma(d))
    return CouplingMatrix(kind=spec.kind, b=spec.b, rho=spec.rho,
                          half_width=hw, bands=bands)


def extend(V: CouplingMatrix, spec: ModelSpec, sites_per_edge: int) -> CouplingMatrix:
    """Grow the lattice symmetrically by ``sites_per_edge`` sites.

    Existing elements are reproduced bit-identically (windowed builds of
    the same spec agree on their overlap), so extension is equivalent to
    having built the larger window in the first place.
    """
    if sites_per_edge < 1:
        raise ValueError("sites_per_edge must be >= 1")
    return build(spec, half_width=V.half_width + int(sites_per_edge))


# ---------------------------------------------------------------------------
# realized spectral sums
# ---------------------------------------------------------------------------

def realized_spectral_sums(matrices, bins_per_decade: int = 8) -> RealizedSums:
    """C(0) and a binned spectral-function estimate from row 0.

    Accepts one matrix or a sequence (ensemble mean).  The estimate is
    ``2 pi rho |V_{n,0}|^2`` averaged in geometric bins of |E_n|; it
    carries the realized cutoff convention of the sampled matrix, which
    is what theory-vs-numerics comparisons should normalize by.
    """
    if isinstance(matrices, CouplingMatrix):
        matrices = [matrices]
    first = matrices[0]
    rho, b, hw = first.rho, first.b, first.half_width
    nmax = min(b, hw)

    sq = np.zeros(2 * nmax)     # mean |V|^2, sites -nmax..-1 then 1..nmax
    c0 = 0.0
    for V in matrices:
        if (V.rho, V.b) != (rho, b):
            raise ValueError("ensemble matrices must share one spec")
        v = V.row0_vector()
        n0 = V.index(0)
        c0 += float(np.sum(v * v))
        left = v[n0 - nmax:n0][::-1] ** 2     # |V_{-1,0}|^2 ... |V_{-nmax,0}|^2
        right = v[n0 + 1:n0 + nmax + 1] ** 2
        sq += np.concatenate([left, right])
    c0 /= len(matrices)
    sq /= len(matrices)

    gaps = np.concatenate([np.arange(1, nmax + 1), np.arange(1, nmax + 1)]) / rho
    chat_raw = 2.0 * np.pi * rho * sq

    lo, hi = 1.0 / rho, nmax / rho
    nbins = max(1, int(np.ceil(np.log10(hi / lo + 1e-300) * bins_per_decade)) + 1)
    edges = np.geomspace(lo * 0.999, hi * 1.001, nbins + 1)
    which = np.digitize(gaps, edges) - 1
    omega, chat, counts = [], [], []
    for k in range(nbins):
        mask = which == k
        if not np.any(mask):
            continue
        omega.append(float(np.exp(np.mean(np.log(gaps[mask])))))
        chat.append(float(np.mean(chat_raw[mask])))
        counts.append(int(np.sum(mask)))
    return RealizedSums(c0=c0, omega=np.array(omega), chat=np.array(chat),
                        counts=np.array(counts))


# ---------------------------------------------------------------------------
# audit dump
# ---------------------------------------------------------------------------

def dump(V: CouplingMatrix, spec: ModelSpec, path) -> None:
    """Write the nonzero elements as ``n m value`` triplets.

    The header line echoes the spec and seed as JSON for reproducibility
    audits.
    """
    header = {
        "kind": spec.kind.value,
        "s": spec.s,
        "epsilon": spec.epsilon,
        "rho": spec.rho,
        "b": spec.b,
        "half_width": V.half_width,
        "seed": int(spec.seed),
    }
    with open(path, "w") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        hw = V.half_width
        if V.kind is ModelKind.FRIEDRICHS:
            for i, val in enumerate(V.row0):
                if val != 0.0:
                    fh.write(f"{i - hw} 0 {float(val)!r}\n")
        else:
            n = V.size
            for d in range(1, V.b + 1):
                vals = V.bands[d - 1, : n - d]
                for i, val in enumerate(vals):
                    if val != 0.0:
                        fh.write(f"{i - hw} {i - hw + d} {float(val)!r}\n")
