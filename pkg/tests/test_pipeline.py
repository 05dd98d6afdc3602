from dataclasses import replace

import numpy as np
import pytest
from scipy.integrate import trapezoid

from transduce_sim.analytics import readout_efficiency
from transduce_sim.config import load_profile, profile_from_dict
from transduce_sim.core import backaction_rate
from transduce_sim.pipeline import (calibrate, detection_difference,
                                    phonon_detection_probability, readout_grid, readout_pulse,
                                    run_thermometry, run_transduction)


@pytest.fixture(scope="module")
def cal(profile):
    return calibrate(profile)


def test_envelope_factor_reproduces_detection_anchor(profile, cal):
    pulse = readout_pulse(profile.settings)
    p = phonon_detection_probability(profile.device, cal.chain, pulse)
    assert p == pytest.approx(8.8e-6, rel=1e-9)
    assert cal.chain.envelope_factor == pytest.approx(0.36751, rel=1e-4)


def test_constant_envelope_limit_matches_closed_form(profile, cal):
    # a square pulse with no rise recovers the intrinsic readout efficiency
    params = profile.device
    square = replace(readout_pulse(profile.settings), rise=0.0)
    got = phonon_detection_probability(params, cal.chain, square) / cal.chain.per_phonon_scale
    gamma = backaction_rate(44, params.mode.g_om, params.kappa_o)
    assert got == pytest.approx(readout_efficiency(38e-9, gamma, params.mode.kappa_m_T1),
                                rel=1e-6)


def test_detection_difference_is_blue_minus_red(profile, cal):
    params, s = profile.device, profile.settings
    pulse = readout_pulse(s)
    t = readout_grid(s)
    gamma = backaction_rate(np.array([pulse.n_c(x) for x in t]), params.mode.g_om,
                            params.kappa_o)
    assert detection_difference(params, cal.chain, pulse) == pytest.approx(
        cal.chain.per_phonon_scale * trapezoid(gamma, t), rel=1e-6)


def test_readout_grid_matches_integrator_step(settings):
    t = readout_grid(settings)
    assert t[0] == 0.0 and t[-1] == pytest.approx(38e-9)
    assert np.diff(t).max() <= settings.dt * (1 + 1e-9)


def test_profile_gamma_override():
    prof = load_profile("paper_device", ["calibration.gamma_p_hz=0"])
    assert calibrate(prof).heating.gamma_p == 0.0


def test_profile_without_qp_section():
    prof = load_profile("paper_device")
    doc = dict(prof.document)
    doc.pop("qp")
    assert calibrate(profile_from_dict(doc)).qp is None


@pytest.mark.parametrize("n_m", [0.0, 0.3, 0.64])
def test_thermometry_round_trip(profile, cal, n_m):
    th = run_thermometry(profile, 10**9, 3, calibration=cal, n_m=n_m)
    assert abs(th.result.n_m - n_m) < 3 * th.result.n_m_sigma


def test_thermometry_reports_calibrated_heating(profile, cal):
    th = run_thermometry(profile, 10**9, 7, calibration=cal)
    assert th.n_m_weighted == pytest.approx(0.64, abs=1e-6)
    assert abs(th.result.n_m - 0.64) < 3 * th.result.n_m_sigma
    assert th.red.seed == th.blue.seed == 7


def test_transduction_frozen(profile, cal):
    run = run_transduction(profile, 10**9, 7, calibration=cal)
    assert run.with_pi.detected == 11017
    assert run.without_pi.detected == 6202
    assert run.result.eta_t == pytest.approx(4.815e-6, rel=1e-9)
    assert run.eta_swap == pytest.approx(0.7158826281742898, rel=1e-9)
    assert run.trace_pi.occupancy_at_readout == pytest.approx(run.eta_swap, abs=1e-12)


def test_transduction_without_heating_has_little_noise(profile, cal):
    run = run_transduction(profile, 10**9, 7, calibration=cal, heating=False)
    # only dark counts and the fridge occupancy remain without the pi pulse
    assert run.result.P_0 < 1e-6
    expected = run.with_pi.mean_per_trial - run.without_pi.mean_per_trial
    sigma = (run.result.eta_t_ci[1] - run.result.eta_t_ci[0]) / 2
    assert abs(run.result.eta_t - expected) < 3 * sigma
    # the still-coupled qubit takes part of the phonon back during readout,
    # so the yield sits below eta_swap * p_d
    assert expected < run.eta_swap * 8.8e-6
