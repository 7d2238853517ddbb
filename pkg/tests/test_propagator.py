"""Tests for the wavepacket propagator."""

import numpy as np
import pytest
from scipy.linalg import expm

from nonohmic.hamiltonian import ModelKind, ModelSpec, build
from nonohmic.propagator import (
    LatticeHamiltonian,
    Wavepacket,
    _BoundsRunaway,
    _chebyshev_step,
    evolve,
    expand_if_needed,
    iter_evolution,
)
from nonohmic.spectral import BandProfile


def make_spec(kind, s=1.3, epsilon=0.9, rho=1.0, b=20, n_levels=100, seed=3):
    profile = BandProfile(s=s, epsilon=epsilon, omega_c=b / rho,
                          omega_rho=1.0 / rho)
    return ModelSpec(kind=kind, profile=profile, rho=rho, b=b,
                     n_levels=n_levels, seed=seed)


def delta_packet(half_width, rho=1.0):
    return Wavepacket.initial(half_width, rho)


# ---------------------------------------------------------------------------
# wavepacket basics
# ---------------------------------------------------------------------------

def test_initial_packet_is_delta():
    psi = delta_packet(10)
    assert psi.t == 0.0
    assert psi.norm == 1.0
    assert psi.survival_probability() == 1.0
    assert psi.edge_probability() == 0.0
    assert psi.amplitudes[psi.index(0)] == 1.0 + 0.0j


def test_index_rejects_offlattice_site():
    psi = delta_packet(4)
    with pytest.raises(IndexError):
        psi.index(5)


# ---------------------------------------------------------------------------
# decoupled and degenerate closed forms
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("engine", ["eigh", "chebyshev"])
def test_zero_coupling_leaves_survival_at_one(engine):
    spec = make_spec(ModelKind.FRIEDRICHS, epsilon=0.0, b=8, n_levels=8)
    V = build(spec)
    H = LatticeHamiltonian(V)
    psi = evolve(delta_packet(8), H, 3.7, engine=engine)
    assert psi.survival_probability() == pytest.approx(1.0, abs=1e-10)
    # the distinguished level sits at zero energy: no phase either
    assert abs(psi.amplitudes[psi.index(0)] - 1.0) < 1e-9


@pytest.mark.parametrize("engine", ["eigh", "chebyshev"])
def test_degenerate_pair_rabi_oscillation(engine):
    # rho so large that the band is degenerate on the Rabi time scale;
    # the rank-two model then reduces to P0 = cos^2(|v| t)
    rho = 1e12
    profile = BandProfile(s=1.0, epsilon=0.5, omega_c=2.0 / rho,
                          omega_rho=1.0 / rho)
    spec = ModelSpec(kind=ModelKind.FRIEDRICHS, profile=profile, rho=rho,
                     b=1, n_levels=1, seed=11)
    V = build(spec)
    H = LatticeHamiltonian(V)
    veff = float(np.linalg.norm(V.row0))
    times = np.linspace(0.1, 2.5, 7) / veff
    for t in times:
        psi = evolve(delta_packet(1, rho), H, float(t), engine=engine)
        assert psi.survival_probability() == pytest.approx(
            np.cos(veff * t) ** 2, abs=1e-9)


def test_chebyshev_matches_matrix_exponential():
    spec = make_spec(ModelKind.FRIEDRICHS, s=1.5, epsilon=0.8, b=6,
                     n_levels=6, seed=5)
    H = LatticeHamiltonian(build(spec))
    t = 3.7
    exact = expm(-1j * H.dense() * t)[:, H.V.index(0)]
    psi = evolve(delta_packet(6), H, t, engine="chebyshev")
    assert np.max(np.abs(psi.amplitudes - exact)) < 1e-8


# ---------------------------------------------------------------------------
# engine cross-validation on a disordered banded matrix
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def banded_case():
    spec = make_spec(ModelKind.WIGNER)
    H = LatticeHamiltonian(build(spec))
    times = np.geomspace(1e-3, 30.0, 20)
    return spec, H, times


def test_chebyshev_matches_dense_eigendecomposition(banded_case):
    _, H, times = banded_case
    for t in times:
        ref = evolve(delta_packet(100), H, float(t), engine="eigh")
        che = evolve(delta_packet(100), H, float(t), engine="chebyshev")
        assert np.max(np.abs(che.amplitudes - ref.amplitudes)) < 1e-6


def test_unitarity_and_energy_conservation(banded_case):
    _, H, times = banded_case
    lo, hi = H.bounds()
    hnorm = max(abs(lo), abs(hi))
    tol = 1e-10
    psi = delta_packet(100)
    e0 = float(np.real(np.vdot(psi.amplitudes, H.apply(psi.amplitudes))))
    for t in times:
        psi = evolve(psi, H, float(t), tol=tol, engine="chebyshev")
        assert abs(psi.norm - 1.0) < 1e-8
        e_t = float(np.real(np.vdot(psi.amplitudes, H.apply(psi.amplitudes))))
        assert abs(e_t - e0) <= tol * hnorm


def test_time_reversal_recovers_initial_state(banded_case):
    _, H, _ = banded_case
    tol = 1e-10
    t = 20.0
    fwd = evolve(delta_packet(100), H, t, tol=tol, engine="chebyshev")
    mirrored = Wavepacket(amplitudes=np.conj(fwd.amplitudes),
                          half_width=fwd.half_width, rho=fwd.rho, t=0.0)
    back = evolve(mirrored, H, t, tol=tol, engine="chebyshev")
    recovered = np.conj(back.amplitudes)
    target = delta_packet(100).amplitudes
    assert np.max(np.abs(recovered - target)) < 10 * tol


def test_evolution_is_deterministic(banded_case):
    _, H, _ = banded_case
    a = evolve(delta_packet(100), H, 7.3, engine="chebyshev")
    b = evolve(delta_packet(100), H, 7.3, engine="chebyshev")
    assert np.array_equal(a.amplitudes, b.amplitudes)


def test_auto_engine_picks_dense_path_for_small_lattices(banded_case):
    _, H, _ = banded_case
    auto = evolve(delta_packet(100), H, 2.0, engine="auto")
    ref = evolve(delta_packet(100), H, 2.0, engine="eigh")
    assert np.array_equal(auto.amplitudes, ref.amplitudes)


# ---------------------------------------------------------------------------
# validation and failure modes
# ---------------------------------------------------------------------------

def test_evolve_validates_arguments(banded_case):
    _, H, _ = banded_case
    psi = delta_packet(100)
    with pytest.raises(ValueError):
        evolve(psi, H, 1.0, tol=0.0)
    with pytest.raises(ValueError):
        evolve(psi, H, 1.0, tol=2e-4)
    moved = evolve(psi, H, 1.0)
    with pytest.raises(ValueError):
        evolve(moved, H, 0.5)
    with pytest.raises(ValueError):
        evolve(delta_packet(3), H, 1.0)


def test_underestimated_interval_triggers_runaway(banded_case):
    _, H, _ = banded_case
    lo, hi = H.bounds()
    psi = delta_packet(100)
    with pytest.raises(_BoundsRunaway):
        _chebyshev_step(psi.amplitudes, H.apply, lo / 4, hi / 4, 30.0, 1e-11)


def test_evolve_recovers_from_bad_tight_bounds(banded_case):
    _, H, _ = banded_case
    lo, hi = H.bounds()
    shadow = LatticeHamiltonian(H.V)
    shadow._bounds = (lo / 4, hi / 4)  # sabotage the cached tight bounds
    ref = evolve(delta_packet(100), H, 30.0, engine="chebyshev")
    out = evolve(delta_packet(100), shadow, 30.0, engine="chebyshev")
    assert np.max(np.abs(out.amplitudes - ref.amplitudes)) < 1e-8


def test_evolve_aborts_loudly_when_all_bounds_fail(banded_case):
    _, H, _ = banded_case
    lo, hi = H.bounds()

    class Broken(LatticeHamiltonian):
        def bounds(self):
            return lo / 4, hi / 4

        def gershgorin_bounds(self):
            return lo / 4, hi / 4

    with pytest.raises(RuntimeError, match="propagation failed"):
        evolve(delta_packet(100), Broken(H.V), 30.0, engine="chebyshev")


# ---------------------------------------------------------------------------
# spectral bounds
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("kind", [ModelKind.FRIEDRICHS, ModelKind.WIGNER])
def test_bounds_enclose_true_spectrum(kind):
    spec = make_spec(kind, b=10, n_levels=40, seed=9)
    H = LatticeHamiltonian(build(spec))
    w = np.linalg.eigvalsh(H.dense())
    lo, hi = H.bounds()
    assert lo <= w[0] and w[-1] <= hi
    g_lo, g_hi = H.gershgorin_bounds()
    assert g_lo <= w[0] and w[-1] <= g_hi
    assert g_lo <= lo and hi <= g_hi


# ---------------------------------------------------------------------------
# lattice self-expansion
# ---------------------------------------------------------------------------

def test_no_expansion_when_edges_are_empty():
    spec = make_spec(ModelKind.WIGNER, b=5, n_levels=20)
    psi = delta_packet(20)
    same, grown = expand_if_needed(psi, spec)
    assert grown is None
    assert same is psi


def test_expansion_triggers_on_edge_probability():
    spec = make_spec(ModelKind.WIGNER, b=5, n_levels=20)
    amp = np.zeros(41, dtype=complex)
    amp[20] = np.sqrt(1.0 - 1e-10)
    amp[0] = 1e-5  # edge probability 1e-10 > default threshold 1e-12
    psi = Wavepacket(amplitudes=amp, half_width=20, rho=1.0, t=2.0)
    grown_psi, grown_V = expand_if_needed(psi, spec)
    assert grown_V is not None
    assert grown_psi.half_width == 20 + 10 * spec.b
    assert grown_V.half_width == grown_psi.half_width
    assert grown_psi.t == psi.t
    assert grown_psi.norm == pytest.approx(psi.norm, abs=1e-14)
    pad = 10 * spec.b
    assert np.array_equal(grown_psi.amplitudes[pad:pad + 41], amp)
    assert np.all(grown_psi.amplitudes[:pad] == 0)
    assert np.all(grown_psi.amplitudes[pad + 41:] == 0)


def test_expansion_respects_threshold_and_growth():
    spec = make_spec(ModelKind.WIGNER, b=5, n_levels=20)
    amp = np.zeros(41, dtype=complex)
    amp[20] = np.sqrt(1.0 - 1e-10)
    amp[0] = 1e-5
    psi = Wavepacket(amplitudes=amp, half_width=20, rho=1.0, t=0.0)
    _, untouched = expand_if_needed(psi, spec, threshold=1e-9)
    assert untouched is None
    grown_psi, _ = expand_if_needed(psi, spec, growth=7)
    assert grown_psi.half_width == 27


def test_rank_two_model_never_grows_past_its_band():
    spec = make_spec(ModelKind.FRIEDRICHS, b=5, n_levels=5)
    amp = np.zeros(11, dtype=complex)
    amp[0] = 1.0  # all probability at the edge site
    psi = Wavepacket(amplitudes=amp, half_width=5, rho=1.0, t=1.0)
    same, grown = expand_if_needed(psi, spec)
    assert grown is None and same is psi


def test_expanded_matrix_extends_the_original():
    spec = make_spec(ModelKind.WIGNER, b=5, n_levels=20, seed=17)
    V0 = build(spec)
    amp = np.zeros(41, dtype=complex)
    amp[20] = np.sqrt(1.0 - 1e-10)
    amp[-1] = 1e-5
    psi = Wavepacket(amplitudes=amp, half_width=20, rho=1.0, t=0.0)
    _, V1 = expand_if_needed(psi, spec)
    for n, m in [(-3, 1), (0, 5), (18, 20)]:
        assert V1.element(n, m) == V0.element(n, m)


def test_iter_evolution_yields_requested_times_and_expands():
    spec = make_spec(ModelKind.WIGNER, s=1.0, epsilon=2.0, b=4, n_levels=8,
                     seed=23)
    times = [0.5, 1.0, 2.0, 4.0]
    seen = []
    final_hw = None
    for psi in iter_evolution(spec, times, threshold=1e-30, growth=6):
        seen.append(psi.t)
        assert abs(psi.norm - 1.0) < 1e-8
        final_hw = psi.half_width
    assert seen == times
    assert final_hw > 8  # the aggressive threshold forces at least one growth


def test_iter_evolution_rejects_unsorted_times():
    spec = make_spec(ModelKind.WIGNER, b=4, n_levels=8)
    with pytest.raises(ValueError):
        list(iter_evolution(spec, [1.0, 0.5]))


def test_iter_evolution_preserves_physics_across_expansion():
    # a packet on a generously sized fixed lattice is the reference; the
    # self-expanding run must agree once its window covers the same span
    spec_small = make_spec(ModelKind.WIGNER, s=1.0, epsilon=1.2, b=4,
                           n_levels=12, seed=31)
    spec_big = make_spec(ModelKind.WIGNER, s=1.0, epsilon=1.2, b=4,
                         n_levels=200, seed=31)
    times = [0.05, 0.3, 0.9, 1.8]
    ref = {}
    for psi in iter_evolution(spec_big, times, expand=False):
        ref[psi.t] = psi.survival_probability()
    for psi in iter_evolution(spec_small, times, threshold=1e-16, growth=40):
        assert psi.survival_probability() == pytest.approx(
            ref[psi.t], abs=1e-6)
