"""Profile calibration and the end-to-end Monte Carlo runs.

Two quantities are fitted to single measured anchors: the detected
photons per phonon entering the readout (``p_d``) fix the envelope
factor, and the occupancy reported by thermometry at one pulse length
fixes the hot-bath coupling.
"""
from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import cumulative_trapezoid, trapezoid

from .analytics import sideband_asymmetry, scattering_rate
from .core import backaction_rate, hz
from .detection import simulate_counts, transduction_estimate
from .environment import (DEFAULT_HOT_BATH_OCCUPANCY, HeatingModel, calibrate_heating,
                          calibrate_qp_injection, heated_occupancy, weighted_average)
from .protocol import swap_efficiency, transduction_sequence
from .pulses import OpticalReadout


@dataclass(frozen=True)
class Calibration:
    chain: object
    heating: HeatingModel
    qp: object = None
    qp_vortex: object = None


def readout_pulse(settings, tau_ro=None):
    tau = settings.tau_ro if tau_ro is None else tau_ro
    return OpticalReadout(tau, settings.n_c, min(settings.readout_rise, tau), 0.0)


def readout_grid(settings, tau_ro=None):
    tau = settings.tau_ro if tau_ro is None else tau_ro
    n = max(1, int(np.ceil(tau / settings.dt - 1e-9)))
    return np.linspace(0.0, tau, n + 1)


def detection_difference(params, chain, readout):
    """Blue-minus-red detected counts per pulse (the thermometry ``p_d``)."""
    per_photon = backaction_rate(1.0, params.mode.g_om, params.kappa_o)
    return chain.per_phonon_scale * per_photon * readout.integrated_n_c()


def phonon_detection_probability(params, chain, readout, points=4001):
    """Detected photons per phonon present when the readout pulse starts.

    The phonon decays through back-action and intrinsic loss while the pump
    ramps, so this is the time-dependent form of ``readout_efficiency``
    scaled by the collection chain.
    """
    t = np.union1d(np.linspace(0.0, readout.duration, points),
                   [readout.rise, readout.duration - readout.fall])
    gamma = backaction_rate(np.array([readout.n_c(x) for x in t]),
                            params.mode.g_om, params.kappa_o)
    survival = np.exp(-params.mode.kappa_m_T1 * t - cumulative_trapezoid(gamma, t, initial=0))
    return chain.per_phonon_scale * float(trapezoid(gamma * survival, t))


def calibrate_envelope_factor(params, chain, readout, p_d):
    """Envelope factor that makes one phonon yield ``p_d`` detected photons."""
    base = phonon_detection_probability(params, replace(chain, envelope_factor=1.0), readout)
    return p_d / base


def calibrate_readout_heating(params, settings, target, n_p=DEFAULT_HOT_BATH_OCCUPANCY,
                              tau_ro=None):
    """Hot-bath coupling giving a pump-weighted occupancy ``target`` over one
    readout pulse that starts from the fridge occupancy."""
    pulse = readout_pulse(settings, tau_ro)
    t = readout_grid(settings, tau_ro)
    mode = params.mode
    return calibrate_heating(
        target, pulse.n_c, t, mode.kappa_m_T1,
        lambda x: backaction_rate(pulse.n_c(x), mode.g_om, params.kappa_o),
        params.n_f, n_p)


def calibrate(profile):
    """Resolve every calibrated quantity of a profile."""
    params, s = profile.device, profile.settings
    cal = profile.section("calibration")
    chain = profile.chain()
    if "envelope_factor" not in profile.section("chain") and "p_d" in cal:
        env = calibrate_envelope_factor(params, chain, readout_pulse(s), cal["p_d"])
        chain = replace(chain, envelope_factor=env)

    n_p = cal.get("hot_bath_n_p", DEFAULT_HOT_BATH_OCCUPANCY)
    if "gamma_p_hz" in cal:
        heating = HeatingModel(hz(cal["gamma_p_hz"]), n_p)
    elif "heating_n_m" in cal:
        heating = calibrate_readout_heating(params, s, cal["heating_n_m"], n_p,
                                            cal.get("heating_tau_s"))
    else:
        heating = HeatingModel(0.0, n_p)

    qp = qp_vortex = None
    q = profile.section("qp")
    if "tau_s" in q and "recovery_s" in q:
        qp = calibrate_qp_injection(q["tau_s"], q["recovery_s"], q.get("threshold", 0.95),
                                    q.get("rabi_window_s", 150e-9))
        if "tau_vortex_s" in q:
            qp_vortex = qp.with_lifetime(q["tau_vortex_s"])
    return Calibration(chain, heating, qp, qp_vortex)


# ---------------------------------------------------------------- thermometry

@dataclass(frozen=True)
class ThermometryRun:
    t: np.ndarray
    n_m: np.ndarray
    n_m_weighted: float
    red: object
    blue: object
    result: object


def run_thermometry(profile, trials, seed, calibration=None, tau_ro=None, n_m=None,
                    workers=None):
    """Red and blue sideband counting on an undriven mechanical mode.

    ``n_m`` injects a fixed occupancy; otherwise the occupancy follows the
    calibrated heating model through the pulse.
    """
    cal = calibrate(profile) if calibration is None else calibration
    params, s = profile.device, profile.settings
    pulse = readout_pulse(s, tau_ro)
    t = readout_grid(s, tau_ro)
    n_c = np.array([pulse.n_c(x) for x in t])
    if n_m is None:
        mode = params.mode
        gom = backaction_rate(n_c, mode.g_om, params.kappa_o)
        occ = heated_occupancy(cal.heating, n_c, t, mode.kappa_m_T1, gom, params.n_f)
    else:
        occ = np.full_like(t, float(n_m))
    red = simulate_counts(scattering_rate("red", occ, n_c, params, cal.chain), pulse.duration,
                          trials, seed, t=t, workers=workers, stream=0)
    blue = simulate_counts(scattering_rate("blue", occ, n_c, params, cal.chain),
                           pulse.duration, trials, seed, t=t, workers=workers, stream=1)
    result = sideband_asymmetry(red, blue, cal.chain.dark_rate)
    return ThermometryRun(t, occ, weighted_average(occ, n_c, t), red, blue, result)


# ---------------------------------------------------------------- transduction

@dataclass(frozen=True)
class TransductionRun:
    with_pi: object
    without_pi: object
    result: object
    trace_pi: object
    trace_0: object
    t_swap: float
    eta_swap: float


def run_transduction(profile, trials, seed, calibration=None, tau_ro=None, workers=None,
                     qubit_drive=None, heating=True):
    """Simulate the drive-swap-readout sequence with and without the pi pulse
    and count photons for ``trials`` repetitions of each."""
    cal = calibrate(profile) if calibration is None else calibration
    params, s = profile.device, profile.settings
    swap = swap_efficiency(params, s, prepare="pulse")
    drive = s.pi_time if qubit_drive is None else qubit_drive
    hm = cal.heating if heating else None
    traces = [transduction_sequence(params, d, tau_ro, s, hm, cal.chain, cal.qp, swap.t_swap)
              for d in (drive, 0.0)]
    records = [simulate_counts(tr.flux_red, tr.tau_ro, trials, seed, t=tr.t,
                               workers=workers, stream=k)
               for k, tr in enumerate(traces)]
    result = transduction_estimate(*records)
    return TransductionRun(records[0], records[1], result, traces[0], traces[1],
                           swap.t_swap, swap.eta_swap)
