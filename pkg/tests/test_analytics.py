import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st
from scipy.integrate import quad

from transduce_sim.analytics import (DetectionChain, avoided_crossing, coupled_branches,
                                     fit_g_om, linewidth_vs_power, lorentzian,
                                     minimum_splitting, mode_linewidths, readout_efficiency,
                                     scattering_rate, sideband_asymmetry, stark_drive_amplitude,
                                     stark_shift, synthetic_linewidths, thermal_npsd)
from transduce_sim.core import backaction_rate, hz, to_hz
from transduce_sim.detection import CountRecord, simulate_counts
from transduce_sim.errors import EstimatorError, FitError

TAU = 38e-9


@pytest.fixture(scope="module")
def chain(params):
    return DetectionChain(params.eta_kappa, eta_sys_measured=0.015)


# ---------------------------------------------------------------- chain

def test_chain_product_and_measured_override(params):
    c = DetectionChain(params.eta_kappa)
    assert c.eta_sys == pytest.approx(0.65 * 0.03 * 0.85)
    assert DetectionChain(params.eta_kappa, eta_sys_measured=0.015).eta_sys == 0.015
    assert params.eta_kappa == pytest.approx(0.503, abs=1e-3)


@pytest.mark.parametrize("kw", [dict(eta_cplr=1.2), dict(eta_spd=-0.1), dict(dark_rate=-1),
                                dict(eta_sys_measured=0.5), dict(envelope_factor=-1)])
def test_chain_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        DetectionChain(0.5, **kw)


# ---------------------------------------------------------------- scattering

def test_red_vacuum_is_dark_only(params, chain):
    assert scattering_rate("red", 0.0, 44.0, params, chain) == chain.dark_rate


def test_no_pump_is_dark_only(params, chain):
    assert scattering_rate("blue", 3.0, 0.0, params, chain) == chain.dark_rate


@given(n_m=st.floats(0, 50), n_c=st.floats(0, 500))
@hsettings(max_examples=60, deadline=None)
def test_sideband_difference_independent_of_occupancy(params, chain, n_m, n_c):
    diff = scattering_rate("blue", n_m, n_c, params, chain) - scattering_rate(
        "red", n_m, n_c, params, chain)
    expected = params.eta_kappa * 0.015 * backaction_rate(n_c, params.mode.g_om, params.kappa_o)
    assert diff == pytest.approx(expected, rel=1e-9, abs=1e-9)


def test_constant_pulse_detected_difference(params, chain):
    diff = (scattering_rate("blue", 0.3, 44, params, chain)
            - scattering_rate("red", 0.3, 44, params, chain)) * TAU
    assert diff == pytest.approx(3.4e-5, rel=0.03)


def test_scattering_broadcasts_envelopes(params, chain):
    n_c = np.linspace(0, 44, 11)
    r = scattering_rate("red", 0.5, n_c, params, chain)
    assert r.shape == (11,) and np.all(np.diff(r) > 0)


def test_scattering_rejects_bad_input(params, chain):
    with pytest.raises(ValueError):
        scattering_rate("green", 0, 1, params, chain)
    with pytest.raises(ValueError):
        scattering_rate("red", -1, 1, params, chain)


# ---------------------------------------------------------------- readout efficiency

G_OM = hz(19e3)
K_T1 = hz(446e3)


def test_readout_efficiency_limit():
    assert readout_efficiency(1.0, G_OM, K_T1) == pytest.approx(0.0409, abs=1e-4)


def test_readout_efficiency_zero_time():
    assert readout_efficiency(0.0, G_OM, K_T1) == 0.0
    assert readout_efficiency(1e-6, 0.0, 0.0) == 0.0


def test_readout_efficiency_at_38ns(params):
    eta = readout_efficiency(TAU, G_OM, K_T1)
    assert eta == pytest.approx(4.3e-3, rel=0.01)
    assert eta * params.eta_kappa * 0.015 == pytest.approx(3.2e-5, rel=0.03)


@given(st.floats(0, 5e-6), st.floats(0, 5e-6))
def test_readout_efficiency_monotone_and_bounded(a, b):
    lo, hi = sorted((a, b))
    e_lo, e_hi = readout_efficiency(lo, G_OM, K_T1), readout_efficiency(hi, G_OM, K_T1)
    assert e_lo <= e_hi < G_OM / (G_OM + K_T1)


def test_readout_efficiency_small_time_slope(params, chain):
    tau = 1e-12
    assert readout_efficiency(tau, G_OM, K_T1) / tau == pytest.approx(G_OM, rel=1e-5)
    # the same slope from integrating the sideband rate difference
    gamma = backaction_rate(44, params.mode.g_om, params.kappa_o)
    diff = (scattering_rate("blue", 0, 44, params, chain)
            - scattering_rate("red", 0, 44, params, chain))
    per_phonon = diff * tau / chain.per_phonon_scale
    assert per_phonon == pytest.approx(
        readout_efficiency(tau, gamma, params.mode.kappa_m_T1), rel=1e-5)


# ---------------------------------------------------------------- asymmetry

def _records(params, chain, n_m, trials, seed):
    t = np.linspace(0, TAU, 191)
    n_c = np.full_like(t, 44.0)
    red = simulate_counts(scattering_rate("red", n_m, n_c, params, chain), TAU, trials, seed,
                          t=t, stream=0)
    blue = simulate_counts(scattering_rate("blue", n_m, n_c, params, chain), TAU, trials, seed,
                           t=t, stream=1)
    return red, blue


@pytest.mark.parametrize("n_m", [0.0, 0.3, 0.64])
def test_asymmetry_recovers_occupancy(params, chain, n_m):
    red, blue = _records(params, chain, n_m, 1e9, 11)
    r = sideband_asymmetry(red, blue, chain.dark_rate)
    assert abs(r.n_m - n_m) < 3 * r.n_m_sigma
    expected_pd = params.eta_kappa * 0.015 * backaction_rate(44, params.mode.g_om,
                                                             params.kappa_o) * TAU
    assert abs(r.p_d - expected_pd) < 3 * r.p_d_sigma
    lo, hi = r.n_m_ci
    assert lo < r.n_m < hi


def test_asymmetry_rejects_equal_sidebands():
    rec = CountRecord(1000, 50, TAU, 0)
    with pytest.raises(EstimatorError, match="non-physical asymmetry"):
        sideband_asymmetry(rec, rec)


def test_asymmetry_rejects_mismatched_records():
    with pytest.raises(EstimatorError):
        sideband_asymmetry(CountRecord(1000, 5, TAU, 0), CountRecord(2000, 50, TAU, 0))


def test_asymmetry_exact_arithmetic():
    r = sideband_asymmetry(CountRecord(10**6, 300, TAU, 0), CountRecord(10**6, 800, TAU, 0))
    assert r.p_d == pytest.approx(500e-6)
    assert r.n_m == pytest.approx(0.6)


# ---------------------------------------------------------------- spectroscopy

def test_minimum_splitting_matches_coupling(params):
    assert minimum_splitting(params) == pytest.approx(4.48e6, rel=0.01)


def test_zero_coupling_gives_bare_branches(params):
    f_m = sorted(to_hz(m.omega_m) for m in params.mech_modes)
    fq = np.linspace(5.10e9, 5.30e9, 37)
    br = coupled_branches(params, fq, couplings=np.zeros(4))
    for row, q in zip(br, fq):
        assert np.array_equal(row, np.sort(np.concatenate([[q], f_m])))


@pytest.mark.parametrize("offset", [-500e6, 500e6])
def test_far_detuned_dispersive_shift(params, offset):
    f0 = to_hz(params.mode.omega_m)
    br = coupled_branches(params, [f0 + offset])[0]
    shift = np.min(np.abs(br - f0))
    bound = to_hz(params.g_pe) ** 2 / abs(offset)  # 10.04 kHz
    assert 0.99 * bound < shift < bound


def test_branches_continuous_in_flux(params):
    x = np.linspace(0.0, 0.3, 3001)
    fq, br = avoided_crossing(params, x)
    step = np.max(np.abs(np.diff(fq)))
    assert np.max(np.abs(np.diff(br, axis=0))) <= step * 1.0001


def test_degenerate_modes_relabel_symmetrically(params):
    m = params.mech_modes[0]
    twin = dataclasses.replace(params, mech_modes=(m, dataclasses.replace(m, g_pe=hz(1e6))))
    swapped = dataclasses.replace(params, mech_modes=(dataclasses.replace(m, g_pe=hz(1e6)), m),
                                  mode_index=1)
    fq = np.linspace(5.15e9, 5.17e9, 21)
    assert np.allclose(coupled_branches(twin, fq), coupled_branches(swapped, fq), rtol=0,
                       atol=1e-3)


def test_lorentzian_area_by_quadrature():
    center, width = hz(5.1588e9), hz(1.04e6)
    area, _ = quad(lorentzian, center - 2000 * width, center + 2000 * width,
                   args=(center, width), points=[center], limit=500)
    assert area == pytest.approx(1.0, abs=1e-3)


def test_npsd_peaks_at_mode_frequencies(params):
    n_c = 20 * 22  # 20 uW at 22 photons per uW
    widths = mode_linewidths(params, n_c)
    for m, w in zip(params.mech_modes, widths):
        grid = np.linspace(m.omega_m - 3 * w, m.omega_m + 3 * w, 2001)
        s = thermal_npsd(params, grid, n_c)
        assert grid[np.argmax(s)] == pytest.approx(m.omega_m, abs=2 * (grid[1] - grid[0]))


@pytest.mark.parametrize("k", range(4))
def test_npsd_area_scales_with_coupling_and_occupancy(params, k):
    n_c, n = 440.0, 1.7
    occ = np.zeros(4)
    occ[k] = n
    m = params.mech_modes[k]
    w = mode_linewidths(params, n_c)[k]
    area, _ = quad(lambda x: float(thermal_npsd(params, np.array([x]), n_c, occ)[0]),
                   m.omega_m - 20 * w, m.omega_m + 20 * w, points=[m.omega_m], limit=400)
    # a unit Lorentzian holds (2/pi) atan(40) of its area within +-20 widths
    assert area == pytest.approx(m.g_om**2 * n_c * n * (2 / math.pi) * math.atan(40), rel=1e-6)


def test_zero_pump_widths_are_intrinsic(params):
    assert np.array_equal(mode_linewidths(params, 0.0),
                          [m.kappa_i_m for m in params.mech_modes])


# ---------------------------------------------------------------- g_om fit

N_C = np.linspace(0, 400, 21)
# a 5% scatter needs back-action broadening well above it to pin the slope
N_C_WIDE = np.linspace(0, 4000, 41)


def test_linewidth_fit_recovers_coupling(params):
    fit = linewidth_vs_power(hz(1e6), hz(420e3), params.kappa_o, N_C)
    assert fit.g_om == pytest.approx(hz(420e3), rel=0.01)
    assert fit.kappa_i_m == pytest.approx(hz(1e6), rel=1e-9)


def test_flat_linewidths_give_zero_coupling(params):
    assert fit_g_om(N_C, np.full_like(N_C, hz(1e6)), params.kappa_o).g_om == 0.0


@pytest.mark.parametrize("seed", range(5))
def test_linewidth_fit_tolerates_noise(params, seed):
    fit = linewidth_vs_power(hz(1e6), hz(420e3), params.kappa_o, N_C_WIDE, noise=0.05,
                             rng=seed)
    assert fit.g_om == pytest.approx(hz(420e3), rel=0.05)


def test_linewidth_fit_needs_two_powers(params):
    with pytest.raises(FitError):
        fit_g_om([10.0, 10.0], [1.0, 2.0], params.kappa_o)


def test_synthetic_noise_free_is_exact(params):
    w = synthetic_linewidths(hz(1e6), hz(420e3), params.kappa_o, [44.0])
    assert w[0] == pytest.approx(hz(1e6) + backaction_rate(44, hz(420e3), params.kappa_o))


# ---------------------------------------------------------------- Stark helper

def test_stark_drive_amplitude():
    omega = stark_drive_amplitude(hz(10e6), hz(50e6))
    assert to_hz(omega) == pytest.approx(31.62e6, rel=1e-3)
    assert stark_shift(omega, hz(50e6)) == pytest.approx(hz(10e6))
    with pytest.raises(ValueError):
        stark_drive_amplitude(hz(10e6), hz(-50e6))
