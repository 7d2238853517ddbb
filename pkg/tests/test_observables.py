"""Tests for wavepacket observables, spreading theory, and fits."""

import math

import numpy as np
import pytest

from nonohmic.hamiltonian import ModelKind, ModelSpec, build
from nonohmic.ldos import survival_volterra, volterra_solution
from nonohmic.observables import (
    CoreScalingResult,
    ObservableSample,
    ObservableSeries,
    core_scaling_analysis,
    fit_stretch_exponent,
    fopt_distribution,
    measure,
    saturation_theory,
    series_from_samples,
    spreading_fm_exact,
    spreading_lrt,
)
from nonohmic.propagator import Wavepacket
from nonohmic.spectral import (
    BandProfile,
    Cutoff,
    correlation_zero,
    wigner_time,
)


def make_profile(s=1.5, epsilon=0.3, omega_c=30.0, omega_rho=1e-9,
                 cutoff=Cutoff.EXPONENTIAL):
    return BandProfile(s=s, epsilon=epsilon, omega_c=omega_c,
                       omega_rho=omega_rho, cutoff=cutoff)


def packet(amplitudes, rho=1.0):
    amp = np.asarray(amplitudes, dtype=complex)
    return Wavepacket(amplitudes=amp, half_width=(amp.size - 1) // 2, rho=rho)


# ---------------------------------------------------------------------------
# wavepacket measurement
# ---------------------------------------------------------------------------

def test_measure_initial_packet_is_trivial():
    sample = measure(Wavepacket.initial(half_width=40, rho=2.0))
    assert sample == ObservableSample(p0=1.0, de_core=0.0, de_sprd=0.0,
                                      e25=0.0, e50=0.0, e75=0.0)


def test_measure_three_site_uniform():
    # closed form: dispersion sqrt(2/3); the quarter quantiles land
    # inside the jumps of the outer sites
    sample = measure(packet(np.full(3, 1.0 / math.sqrt(3.0))))
    assert sample.p0 == pytest.approx(1.0 / 3.0)
    assert sample.de_sprd == pytest.approx(math.sqrt(2.0 / 3.0))
    assert (sample.e25, sample.e50, sample.e75) == (-1.0, 0.0, 1.0)
    assert sample.de_core == pytest.approx(2.0)


def test_measure_symmetric_median_is_zero():
    amp = np.sqrt(np.array([0.1, 0.2, 0.4, 0.2, 0.1]))
    sample = measure(packet(amp, rho=4.0))
    assert sample.e50 == 0.0
    assert sample.e25 == -sample.e75


def test_measure_symmetric_quantiles_survive_rounding():
    # the cumulative hits 0.25 and 0.75 exactly in real arithmetic but
    # not in floats; the plateau midpoints must stay symmetric anyway
    amp = np.sqrt(np.array([0.1, 0.15, 0.5, 0.15, 0.1]))
    sample = measure(packet(amp, rho=4.0))
    assert sample.e50 == 0.0
    assert (sample.e25, sample.e75) == (-0.125, 0.125)


def test_measure_plateau_quantile_takes_the_midpoint():
    # no central mass: the median falls on a plateau of the cumulative
    # and must come back as the plateau midpoint, not an edge site
    sample = measure(packet(np.sqrt([0.5, 0.0, 0.5])))
    assert sample.e50 == 0.0
    assert (sample.e25, sample.e75) == (-1.0, 1.0)


def test_measure_scales_with_level_density():
    sample = measure(packet(np.full(3, 1.0 / math.sqrt(3.0)), rho=10.0))
    assert sample.de_sprd == pytest.approx(math.sqrt(2.0 / 3.0) / 10.0)
    assert sample.de_core == pytest.approx(0.2)


def test_measure_rejects_unnormalized_packet():
    with pytest.raises(ValueError, match="normalized"):
        measure(packet([0.5, 0.5, 0.5]))


def test_series_validation():
    t = np.arange(4.0)
    ones, zeros = np.ones(4), np.zeros(4)
    with pytest.raises(ValueError, match=r"\[0, 1\]"):
        ObservableSeries(times=t, p0=ones * 1.5, de_core=zeros,
                         de_sprd=zeros, e25=zeros, e50=zeros, e75=zeros)
    with pytest.raises(ValueError, match="ordered"):
        ObservableSeries(times=t, p0=ones, de_core=zeros, de_sprd=zeros,
                         e25=ones, e50=zeros, e75=ones)
    with pytest.raises(ValueError, match="per time"):
        ObservableSeries(times=t, p0=ones[:3], de_core=zeros, de_sprd=zeros,
                         e25=zeros, e50=zeros, e75=zeros)


def test_series_from_samples_round_trip():
    samples = [measure(Wavepacket.initial(4, 1.0)),
               measure(packet(np.full(3, 1.0 / math.sqrt(3.0))))]
    series = series_from_samples([0.0, 1.0], samples)
    assert series.p0 == pytest.approx([1.0, 1.0 / 3.0])
    assert series.de_core == pytest.approx([0.0, 2.0])
    assert series.n_realizations == 1
    with pytest.raises(ValueError, match="per time"):
        series_from_samples([0.0], samples)


# ---------------------------------------------------------------------------
# first-order distribution
# ---------------------------------------------------------------------------

def test_fopt_distribution_at_time_zero():
    tail, delta = fopt_distribution(make_profile(), np.linspace(0, 5, 9), 0.0)
    assert np.all(tail == 0.0)
    assert delta == 1.0


def test_fopt_small_frequency_envelope():
    # 4 sin^2(wt/2)/w^2 -> t^2: the density approaches band(0) t^2 / 2pi
    t = 0.5
    ohmic = make_profile(s=1.0, epsilon=0.2)
    tail, _ = fopt_distribution(ohmic, np.array([0.0, 1e-6]), t)
    assert tail[0] == pytest.approx(ohmic.epsilon**2 * t * t)
    assert tail[1] == pytest.approx(tail[0], rel=1e-6)
    tail_super, _ = fopt_distribution(make_profile(s=1.5), np.array([0.0]), t)
    assert tail_super[0] == 0.0


def test_fopt_delta_weight_matches_density_integral():
    profile = make_profile(s=1.5, epsilon=0.1)
    t = 0.5
    w = np.linspace(0.0, 600.0, 60001)
    tail, delta = fopt_distribution(profile, w, t)
    mass = 2.0 * np.trapezoid(tail, w)
    assert 1.0 - delta == pytest.approx(mass, rel=5e-3)


def test_fopt_mass_matches_survival_deficit():
    # the tail mass at t << t0 must reproduce 1 - P0 from the
    # memory-kernel route, which resums all orders independently; the
    # first-order mass overshoots by ~mass/2, so the exponent must stay
    # mildly non-Ohmic for a 10% agreement at this time
    profile = make_profile(s=1.1, epsilon=0.1)
    t0 = wigner_time(profile)
    t = 0.1 * t0
    out = survival_volterra(profile, [t])
    deficit = 1.0 - float(np.abs(out.c0[-1]) ** 2)
    _, delta = fopt_distribution(profile, np.array([0.0]), t)
    assert 1.0 - delta == pytest.approx(deficit, rel=0.1)


# ---------------------------------------------------------------------------
# spreading curves
# ---------------------------------------------------------------------------

def test_spreading_lrt_starts_at_zero():
    assert spreading_lrt(make_profile(), [0.0])[0] == 0.0


def test_spreading_lrt_ballistic_onset():
    # slope [-C''(0)]^(1/2) = [2 eps^2 Gamma(s+2) w_c^(s+2)]^(1/2)
    profile = make_profile(s=1.5, epsilon=0.2, omega_c=5.0)
    slope = math.sqrt(2.0 * profile.epsilon**2 * math.gamma(3.5) * 5.0**3.5)
    t = np.array([1e-6, 2e-6])
    assert np.allclose(spreading_lrt(profile, t) / t, slope, rtol=1e-5)


def test_spreading_lrt_realized_saturation():
    # banded matrix: the long-time level is sqrt(2 C(0)) with the
    # realized C(0) of the sampled row
    profile = BandProfile(s=1.5, epsilon=0.5, omega_c=200.0, omega_rho=0.25)
    spec = ModelSpec(kind=ModelKind.WIGNER, profile=profile, rho=4.0,
                     b=800, n_levels=800, seed=7)
    V = build(spec)
    c_zero = float(np.sum(V.row0_vector() ** 2))
    late = spreading_lrt(V, [0.9, 1.7, 3.1])
    assert np.allclose(late / math.sqrt(2.0 * c_zero), 1.0, atol=0.05)


def test_spreading_lrt_saturates_after_transient():
    # the spreading settles on the cutoff time scale, long before the
    # decay time
    profile = make_profile(s=1.5, epsilon=0.2)
    t_c = 2.0 * math.pi / profile.omega_c
    level = math.sqrt(2.0 * correlation_zero(profile))
    assert spreading_lrt(profile, [10.0 * t_c])[0] / level > 0.9


def test_spreading_lrt_rejects_unknown_source():
    with pytest.raises(TypeError):
        spreading_lrt("profile", [0.0, 1.0])


def test_spreading_fm_exact_starts_at_zero():
    profile = make_profile(s=1.5, epsilon=0.3)
    sol = volterra_solution(profile, 2.0)
    curve, residue = spreading_fm_exact(sol, correlation_zero(profile))
    assert curve[0] == 0.0
    assert residue < 1e-8 * correlation_zero(profile)


def test_spreading_fm_exact_short_time_reduces_to_lrt():
    profile = make_profile(s=1.5, epsilon=0.3)
    sol = volterra_solution(profile, 0.1, dt=1e-4)
    curve, _ = spreading_fm_exact(sol, correlation_zero(profile))
    probes = np.array([0.01, 0.02, 0.03])
    exact = np.interp(probes, sol.times, curve)
    assert np.allclose(exact, spreading_lrt(profile, probes), rtol=0.02)


def test_spreading_fm_exact_saturation_is_sqrt_c0():
    # once the survival amplitude has decayed the exact curve levels at
    # sqrt(C(0)), a factor sqrt(2) below the banded-model value
    profile = make_profile(s=1.5, epsilon=0.3)
    t0 = wigner_time(profile)
    c_zero = correlation_zero(profile)
    sol = volterra_solution(profile, 100.0 * t0)
    curve, _ = spreading_fm_exact(sol, c_zero)
    tail = np.mean(curve[-5:])
    assert tail / math.sqrt(c_zero) == pytest.approx(1.0, abs=0.03)


def test_spreading_fm_exact_rejects_inconsistent_inputs():
    profile = make_profile(s=1.5, epsilon=0.3)
    sol = volterra_solution(profile, 2.0)
    with pytest.raises(RuntimeError, match="radicand"):
        spreading_fm_exact(sol, 0.5 * correlation_zero(profile))


def test_saturation_theory_values():
    p = BandProfile(s=1.0, epsilon=0.4, omega_c=30.0, omega_rho=1.0)
    assert saturation_theory(p) == pytest.approx(
        math.sqrt(2.0 * 0.16 * 30.0))
    assert saturation_theory(p, finite_spacing=True) == pytest.approx(
        math.sqrt(2.0 * 0.16 * 29.0))
    # s -> 0 with the spacing correction: the bracket tends to the log
    # of the band-to-spacing ratio
    tiny = BandProfile(s=1e-6, epsilon=0.4, omega_c=1e2, omega_rho=1e-4)
    assert saturation_theory(tiny, finite_spacing=True) == pytest.approx(
        math.sqrt(2.0 * 0.16 * math.log(1e6)), rel=1e-3)
    # diverges with the cutoff
    assert saturation_theory(make_profile(omega_c=1e6)) \
        > saturation_theory(make_profile(omega_c=1e3))


# ---------------------------------------------------------------------------
# stretch-exponent fit
# ---------------------------------------------------------------------------

def _survival_series(times, p0):
    zeros = np.zeros_like(times)
    return ObservableSeries(times=times, p0=p0, de_core=zeros,
                            de_sprd=zeros, e25=zeros, e50=zeros, e75=zeros)


def test_fit_stretch_recovers_synthetic_exponent():
    times = np.geomspace(0.1, 10.0, 40)
    series = _survival_series(times, np.exp(-times**0.7))
    fit = fit_stretch_exponent(series, window=(0.1, 10.0))
    assert fit.alpha == pytest.approx(0.7, abs=0.01)
    assert fit.stderr < 0.01
    assert fit.n_points == 40


def test_fit_stretch_pure_exponential():
    times = np.geomspace(0.5, 20.0, 30)
    series = _survival_series(times, np.exp(-0.3 * times))
    fit = fit_stretch_exponent(series, window=(0.5, 20.0))
    assert fit.alpha == pytest.approx(1.0, abs=0.05)


def test_fit_stretch_automatic_window():
    profile = make_profile(s=1.5, epsilon=0.3)
    t0 = wigner_time(profile)
    times = np.geomspace(0.01 * t0, 100.0 * t0, 200)
    series = _survival_series(times, np.exp(-0.5 * (times / t0) ** 0.5))
    fit = fit_stretch_exponent(series, profile=profile)
    assert fit.alpha == pytest.approx(0.5, abs=0.02)
    assert fit.window[0] == pytest.approx(2.0 * t0)
    assert fit.window[1] == pytest.approx(50.0 * t0)


def test_fit_stretch_refuses_thin_windows():
    times = np.geomspace(0.1, 10.0, 40)
    series = _survival_series(times, np.exp(-times**0.7))
    with pytest.raises(ValueError, match="at least 8"):
        fit_stretch_exponent(series, window=(5.0, 6.0))
    with pytest.raises(ValueError, match="profile"):
        fit_stretch_exponent(series)


# ---------------------------------------------------------------------------
# core-width scaling collapse
# ---------------------------------------------------------------------------

def _synthetic_run(epsilon, s=1.5, n=200):
    profile = BandProfile(s=s, epsilon=epsilon, omega_c=100.0,
                          omega_rho=1e-6)
    t0 = wigner_time(profile)
    times = np.geomspace(1e-3 * t0, 30.0 * t0, n)
    sat = 0.37 / t0
    width = sat * (1.0 - np.exp(-times / t0))
    zeros = np.zeros_like(times)
    return ObservableSeries(times=times, p0=np.exp(-times / t0),
                            de_core=width, de_sprd=width,
                            e25=-width / 2, e50=zeros, e75=width / 2), t0


def test_core_scaling_collapse_has_unit_slope():
    runs = [_synthetic_run(eps)[0] for eps in (0.2, 0.3, 0.45, 0.67, 1.0)]
    result = core_scaling_analysis(runs)
    assert result.kept == [0, 1, 2, 3, 4] and not result.excluded
    slope = np.polyfit(np.log(result.inverse_saturations),
                       np.log(result.departure_times), 1)[0]
    assert slope == pytest.approx(1.0, abs=0.05)


def test_core_scaling_departure_follows_the_decay_time():
    (run, t0), (run2, t02) = _synthetic_run(0.3), _synthetic_run(0.6)
    result = core_scaling_analysis([run, run2, run, run2])
    # half-saturation crossing of 1 - exp(-t/t0) sits at t0 ln 2
    assert result.departure_times[0] == pytest.approx(math.log(2.0) * t0,
                                                      rel=0.02)
    # doubling the coupling contracts the departure by 2^(-2/(2-s))
    ratio = result.departure_times[1] / result.departure_times[0]
    assert ratio == pytest.approx(2.0 ** (-2.0 / 0.5), rel=0.02)
    assert ratio == pytest.approx(t02 / t0, rel=0.02)


def test_core_scaling_excludes_unsaturated_runs():
    run, _ = _synthetic_run(0.3)
    t = run.times
    ramp = (0.1 / t[-1]) * t          # never levels off
    rising = ObservableSeries(times=t, p0=run.p0, de_core=ramp,
                              de_sprd=ramp, e25=-ramp / 2,
                              e50=np.zeros_like(t), e75=ramp / 2)
    late = ObservableSeries(times=t[150:], p0=run.p0[150:],
                            de_core=run.de_core[150:],
                            de_sprd=run.de_sprd[150:],
                            e25=run.e25[150:], e50=run.e50[150:],
                            e75=run.e75[150:])   # starts past departure
    result = core_scaling_analysis([run, rising, late, run])
    assert result.excluded == [1, 2]
    assert result.departure_times.size == 2
    with pytest.raises(ValueError, match="four"):
        core_scaling_analysis([run, run, run])


def test_survival_half_life_tracks_the_decay_time():
    # the 50% survival crossing sits within a factor 2 of t0
    profile = make_profile(s=1.3, epsilon=0.3)
    t0 = wigner_time(profile)
    times = np.linspace(0.0, 4.0 * t0, 400)
    p0 = np.abs(survival_volterra(profile, times).c0) ** 2
    k = int(np.argmax(p0 < 0.5))
    t_half = float(np.interp(0.5, [p0[k], p0[k - 1]],
                             [times[k], times[k - 1]]))
    assert 0.5 * t0 < t_half < 2.0 * t0
