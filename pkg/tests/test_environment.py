import math

import numpy as np
import pytest
from hypothesis import given, settings as hsettings, strategies as st

from transduce_sim.analytics import scattering_rate, sideband_asymmetry
from transduce_sim.core import backaction_rate
from transduce_sim.detection import simulate_counts
from transduce_sim.environment import (HeatingModel, QPModel, calibrate_heating,
                                       calibrate_qp_injection, heated_occupancy, qp_recovery,
                                       repetition_budget, steady_state_occupancy,
                                       weighted_average)
from transduce_sim.pipeline import calibrate, readout_grid, readout_pulse
from transduce_sim.pulses import Idle, MicrowaveDrive, OpticalReadout, PulseSequence

KAPPA = 1 / 357e-9


@pytest.fixture(scope="module")
def cal(profile):
    return calibrate(profile)


@pytest.fixture(scope="module")
def window(params, settings):
    pulse = readout_pulse(settings)
    t = readout_grid(settings)
    n_c = np.array([pulse.n_c(x) for x in t])
    gom = backaction_rate(n_c, params.mode.g_om, params.kappa_o)
    return t, n_c, gom


# ---------------------------------------------------------------- heating

def test_heating_model_validates():
    with pytest.raises(ValueError):
        HeatingModel(-1.0)
    assert HeatingModel(5.0).rate(0.0) == 0.0


def test_calibrated_anchor(params, cal, window):
    t, n_c, gom = window
    n = heated_occupancy(cal.heating, n_c, t, KAPPA, gom, params.n_f)
    assert weighted_average(n, n_c, t) == pytest.approx(0.64, abs=0.05)
    assert cal.heating.n_p == 10.0
    assert cal.heating.gamma_p == pytest.approx(111949, rel=1e-3)


def test_no_light_no_heating(params, cal):
    t = np.linspace(0, 200e-9, 101)
    n = heated_occupancy(cal.heating, 0.0, t, KAPPA, 0.0, params.n_f)
    assert np.allclose(n, params.n_f, rtol=1e-9, atol=1e-15)
    assert params.n_f < 1e-6


def test_monotone_rise_under_constant_power(params, cal):
    t = np.linspace(0, 500e-9, 501)
    gom = backaction_rate(44, params.mode.g_om, params.kappa_o)
    n = heated_occupancy(cal.heating, 44.0, t, KAPPA, gom, params.n_f)
    assert np.all(np.diff(n) >= 0)
    assert n[0] == pytest.approx(params.n_f)


def test_steady_state_closed_form(params):
    m = HeatingModel(2e5, 7.0)
    gom = backaction_rate(44, params.mode.g_om, params.kappa_o)
    t = np.linspace(0, 20e-6, 401)
    n = heated_occupancy(m, 44.0, t, KAPPA, gom, 0.01)
    expected = (KAPPA * 0.01 + m.gamma_p * 44 * 7.0) / (KAPPA + gom + m.gamma_p * 44)
    assert steady_state_occupancy(m, 44.0, KAPPA, gom, 0.01) == pytest.approx(expected)
    assert n[-1] == pytest.approx(expected, rel=1e-8)


@given(st.floats(1e3, 1e6))
@hsettings(max_examples=20, deadline=None)
def test_doubling_coupling_doubles_initial_slope(gp):
    t = np.array([0.0, 1e-12])
    n1 = heated_occupancy(HeatingModel(gp, 10.0), 44.0, t, KAPPA, 0.0)
    n2 = heated_occupancy(HeatingModel(2 * gp, 10.0), 44.0, t, KAPPA, 0.0)
    assert (n2[1] - n2[0]) == pytest.approx(2 * (n1[1] - n1[0]), rel=1e-4)


def test_onset_delay_postpones_heating():
    t = np.linspace(0, 40e-9, 41)
    n = heated_occupancy(HeatingModel(1e5, 10.0, onset_delay=10e-9), 44.0, t, KAPPA, 0.0)
    assert np.all(n[:10] == 0.0)
    assert n[-1] > 0


def test_calibration_inverts_the_forward_model(params, window):
    t, n_c, gom = window
    for target in (0.2, 0.64, 1.5):
        m = calibrate_heating(target, n_c, t, KAPPA, gom, params.n_f)
        n = heated_occupancy(m, n_c, t, KAPPA, gom, params.n_f)
        assert weighted_average(n, n_c, t) == pytest.approx(target, rel=1e-8)


def test_calibration_below_floor_gives_zero(window):
    t, n_c, gom = window
    assert calibrate_heating(0.0, n_c, t, KAPPA, gom, 0.0).gamma_p == 0.0


def test_unreachable_target_raises(window):
    t, n_c, gom = window
    with pytest.raises(ValueError):
        calibrate_heating(20.0, n_c, t, KAPPA, gom, 0.0, n_p=10.0)


def test_heated_occupancy_round_trips_through_thermometry(params, cal, window):
    t, n_c, gom = window
    n = heated_occupancy(cal.heating, n_c, t, KAPPA, gom, params.n_f)
    injected = weighted_average(n, n_c, t)
    red = simulate_counts(scattering_rate("red", n, n_c, params, cal.chain), t[-1], 1e9, 5,
                          t=t, stream=0)
    blue = simulate_counts(scattering_rate("blue", n, n_c, params, cal.chain), t[-1], 1e9, 5,
                           t=t, stream=1)
    r = sideband_asymmetry(red, blue, cal.chain.dark_rate)
    assert abs(r.n_m - injected) < 3 * r.n_m_sigma


# ---------------------------------------------------------------- quasi-particles

def test_qp_recovery_times(cal):
    assert cal.qp.recovery_time() == pytest.approx(8e-3, rel=1e-9)
    assert cal.qp_vortex.recovery_time() == pytest.approx(2e-3, rel=0.2)
    ratio = cal.qp.recovery_time() / cal.qp_vortex.recovery_time()
    assert 4 <= ratio <= 5.5


def test_recovery_curve_monotone_and_thresholded(cal):
    delays = np.linspace(0, 20e-3, 2001)
    curve = qp_recovery(cal.qp, delays)
    assert np.all(np.diff(curve.contrast) > 0)
    assert curve.first_recovered_delay == pytest.approx(8e-3, abs=1e-5)
    assert curve.contrast[-1] < 1.0


def test_zero_injection_is_flat():
    curve = qp_recovery(QPModel(1.5e-3, 0.0), np.linspace(0, 10e-3, 11))
    assert np.all(curve.contrast == 1.0)
    assert curve.recovery_time == 0.0


@given(st.floats(1.5, 10))
def test_recovery_scales_with_lifetime(scale):
    # injection large enough that recovery sits in the exponential tail
    m = QPModel(1e-3, 50.0)
    assert m.with_lifetime(scale * 1e-3).recovery_time() == pytest.approx(
        scale * m.recovery_time(), rel=1e-12)


def test_calibrated_injection_round_trip():
    m = calibrate_qp_injection(1.5e-3, 8e-3, 0.9)
    assert m.contrast(8e-3) == pytest.approx(0.9, rel=1e-12)


@pytest.mark.parametrize("kw", [dict(tau_qp=0.0, injection=1.0),
                                dict(tau_qp=1e-3, injection=-1.0),
                                dict(tau_qp=1e-3, injection=1.0, threshold=1.0)])
def test_qp_model_validates(kw):
    with pytest.raises(ValueError):
        QPModel(**kw)


def _sequence(period, light=True):
    segs = [MicrowaveDrive(32e-9, 1e8), Idle(100e-9)]
    if light:
        segs.append(OpticalReadout(38e-9, 44, 20e-9))
    return PulseSequence(segs, 0.0, period)


def test_budget_at_default_period(cal):
    b = repetition_budget(_sequence(10e-3), cal.qp)
    assert b.limiting == "qp_recovery"
    assert b.max_rate == pytest.approx(125.0, rel=1e-9)
    assert b.operating_ok
    assert not repetition_budget(_sequence(5e-3), cal.qp).operating_ok


def test_budget_without_light(cal):
    seq = _sequence(1e-6, light=False)
    b = repetition_budget(seq, cal.qp)
    assert b.limiting == "sequence"
    assert b.max_rate == pytest.approx(1 / seq.total_duration)


def test_vortex_budget_improves_by_recovery_ratio(cal):
    slow = repetition_budget(_sequence(10e-3), cal.qp).max_rate
    fast = repetition_budget(_sequence(10e-3), cal.qp_vortex).max_rate
    assert fast / slow == pytest.approx(
        cal.qp.recovery_time() / cal.qp_vortex.recovery_time(), rel=1e-12)
    assert fast == pytest.approx(586, rel=1e-3)
    assert math.isfinite(fast)
