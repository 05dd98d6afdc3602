import math
import sys

import pytest

from transduce_sim.config import load_profile
from transduce_sim.core import DeviceParams, MechanicalMode, QubitParams, hz

LONG = 1e3  # seconds; effectively lossless on every simulated time scale


@pytest.fixture(scope="session")
def profile():
    return load_profile("paper_device")


@pytest.fixture(scope="session")
def params(profile):
    return profile.device


@pytest.fixture(scope="session")
def settings(profile):
    return profile.settings


def make_params(g_pe=2.24e6, T1_q=522e-9, T2s_q=678e-9, T1_m=357e-9, T_f=0.015, **mode):
    m = dict(omega_m=hz(5.1588e9), g_om=hz(420e3), kappa_i_m=hz(1e6), T1_m=T1_m)
    m.update(mode)
    return DeviceParams(hz(g_pe), [MechanicalMode(**m)], hz(194.46e12), hz(0.8e9),
                        hz(0.81e9), QubitParams(15.5e9, 292e6, T1_q, T2s_q, hz(120e3)), T_f)


@pytest.fixture(scope="session")
def lossless():
    return make_params(T1_q=LONG, T2s_q=2 * LONG, T1_m=LONG, T_f=1e-3)


def pytest_report_header(config):
    return f"pi = {math.pi:.6f}; transduce_sim tests"


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    results = getattr(mod, "RESULTS", None)
    if results:
        terminalreporter.section("acceptance criteria")
        for n in sorted(results):
            terminalreporter.write_line(results[n])
