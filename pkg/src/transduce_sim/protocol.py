"""Measurement protocols: Rabi, Stark-driven swap, phonon T1, Ramsey and the
full transduction sequence."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import curve_fit, minimize_scalar

from .analytics import scattering_rate
from .core import build_operators, hz
from .dynamics import (DEFAULT_DT, DensityMatrix, build_model, evolve, evolve_to,
                       expectation)
from .environment import repetition_budget
from .errors import FitError
from .pulses import Idle, MicrowaveDrive, OpticalReadout, PulseSequence, StarkShift


@dataclass(frozen=True)
class ProtocolSettings:
    """Timing and drive choices shared by the protocols (SI, rad/s)."""

    qubit_detuning: float = hz(-10e6)    # idle qubit frequency minus omega_m
    bias_detuning: float = hz(-59e6)     # characterisation bias point
    pi_time: float = 32e-9
    drive_edge: float = 2e-9
    stark_shift: float = hz(10e6)
    stark_rise: float = 15e-9
    swap_time: float | None = None       # total Stark pulse length; None = optimise
    n_c: float = 44.0
    readout_rise: float = 20e-9
    tau_ro: float = 38e-9
    repetition_period: float = 10e-3
    N_m: int = 4
    N_m_readout: int = 8
    dt: float = DEFAULT_DT

    @property
    def rabi_rate(self):
        return math.pi / self.pi_time


DEFAULT_SETTINGS = ProtocolSettings()


def _settings(s):
    return DEFAULT_SETTINGS if s is None else s


def _pi_pulse(settings, length=None, phase=0.0, detuning=0.0):
    return MicrowaveDrive(settings.pi_time if length is None else length,
                          settings.rabi_rate, detuning, phase, settings.drive_edge)


def _stark(settings, length):
    rise = min(settings.stark_rise, 0.5 * length)
    return StarkShift(length, settings.stark_shift, rise)


def _uncoupled(model):
    return replace(model, hamiltonian=np.zeros_like(model.hamiltonian))


def decoupled_model(params, seq, N_m=2, **kw):
    """Model with the qubit-phonon coupling switched off."""
    return _uncoupled(build_model(params, seq, N_m=N_m, **kw))


# ------------------------------------------------------------------------ fits

def _first_max_guess(x, y):
    i = int(np.argmax(y[: max(3, len(y) // 2)]))
    return max(x[i], x[1] - x[0])


def _fit_damped_cosine(x, y, omega0):
    """y = c - a cos(w x + phi) exp(-x / T); returns (popt, pcov)."""
    contrast = float(np.max(y) - np.min(y))
    if contrast < 0.05:
        raise FitError(f"contrast {contrast:.3g} too small to fit")

    def model(x, c, a, w, phi, inv_t):
        return c - a * np.cos(w * x + phi) * np.exp(-x * inv_t)

    span = float(x[-1] - x[0])
    p0 = [float(np.mean(y)), 0.5 * contrast, omega0, 0.0, 0.5 / span]
    try:
        popt, pcov = curve_fit(model, x, y, p0=p0, maxfev=20000,
                               bounds=([-np.inf, 0, 0, -np.pi, 0],
                                       [np.inf, np.inf, np.inf, np.pi, np.inf]))
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    return popt, pcov


# ------------------------------------------------------------------------ Rabi

@dataclass(frozen=True)
class RabiResult:
    durations: np.ndarray
    P_e: np.ndarray
    period: float | None = None
    pi_time: float | None = None


def rabi_scan(params, omega, durations, settings=None, fit=True):
    """Qubit excited-state population after drive pulses of each duration.

    The qubit sits at the characterisation bias point, far detuned from the
    mechanics, and is simulated with the piezoelectric coupling off.
    """
    s = _settings(settings)
    durations = np.asarray(durations, dtype=float)
    P = np.empty(len(durations))
    for i, tau in enumerate(durations):
        segs = [MicrowaveDrive(tau, omega, 0.0, 0.0, s.drive_edge)] if (tau > 0 and omega > 0) else []
        seq = PulseSequence(segs, s.bias_detuning, s.repetition_period)
        if not segs:
            P[i] = 0.0
            continue
        ops = build_operators(2)
        model = decoupled_model(params, seq, ops=ops)
        rho = evolve_to(model, ops.basis_state(0, 0), 0.0, seq.total_duration, s.dt)
        P[i] = expectation(rho, ops.sigma_ee)
    if not fit:
        return RabiResult(durations, P)
    popt, _ = _fit_damped_cosine(durations, P, math.pi / _first_max_guess(durations, P))
    w, phi = popt[2], popt[3]
    return RabiResult(durations, P, 2 * math.pi / w, (math.pi - phi) / w)


# ------------------------------------------------------------ qubit-phonon swap

def stark_swap(params, hold, settings=None, prepare="ideal"):
    """Populations after an AC-Stark pulse of total length ``hold``.

    ``prepare="ideal"`` starts from |e, 0>; ``"pulse"`` simulates the
    resonant pi pulse at the idle frequency first. A hold of zero applies
    no Stark pulse.
    """
    s = _settings(settings)
    if abs(s.stark_shift) < 4 * params.g_pe:
        warnings.warn("insufficient detuning contrast", RuntimeWarning, stacklevel=2)
    ops, rho = _prepare(params, s, prepare)
    if hold > 0:
        rho = _swap(params, s, ops, rho, hold)
    return {"P_e_after": expectation(rho, ops.sigma_ee),
            "n_m_after": expectation(rho, ops.n_m), "state": rho}


def _drive(params, s, ops, rho, length):
    """Apply a resonant drive of ``length`` at the idle qubit frequency."""
    seq = PulseSequence([_pi_pulse(s, length)], s.qubit_detuning, s.repetition_period)
    model = build_model(params, seq, ops=ops)
    return evolve_to(model, rho, 0.0, seq.total_duration, s.dt)


def _swap(params, s, ops, rho, length):
    seq = PulseSequence([_stark(s, length)], s.qubit_detuning, s.repetition_period)
    model = build_model(params, seq, ops=ops)
    return evolve_to(model, rho, 0.0, length, s.dt)


def _prepare(params, s, prepare):
    ops = build_operators(s.N_m)
    if prepare == "ideal":
        return ops, DensityMatrix(ops.basis_state(1, 0), ops.dims)
    if prepare != "pulse":
        raise ValueError("prepare must be 'ideal' or 'pulse'")
    return ops, _drive(params, s, ops, ops.basis_state(0, 0), s.pi_time)


def vacuum_rabi_scan(params, holds, settings=None, prepare="ideal"):
    """Qubit population and phonon number versus Stark pulse length."""
    out = [stark_swap(params, h, settings, prepare) for h in holds]
    return (np.array([o["P_e_after"] for o in out]),
            np.array([o["n_m_after"] for o in out]))


def vacuum_rabi_frequency(holds, P_e, min_hold=None):
    """Oscillation frequency (Hz) of a damped vacuum Rabi trace.

    Pulses shorter than both edges never reach full resonance, so their
    effective interaction time is not linear in the length. Those points are
    dropped; ``min_hold`` defaults to twice the default Stark rise time.
    """
    holds = np.asarray(holds, dtype=float)
    P_e = np.asarray(P_e, dtype=float)
    cut = 2 * DEFAULT_SETTINGS.stark_rise if min_hold is None else min_hold
    keep = holds >= cut - 1e-15
    holds, P_e = holds[keep], P_e[keep]
    if len(holds) < 6:
        raise FitError("insufficient points")
    # both the mean and the oscillation decay as the excitation leaks out
    def model(x, c, a, w, phi, g):
        return np.exp(-g * x) * (c + a * np.cos(w * x + phi))

    if np.ptp(P_e) < 0.05:
        raise FitError("contrast too small to fit")
    p0 = [float(np.mean(P_e)), 0.5 * float(np.ptp(P_e)), _dominant_frequency(holds, P_e),
          0.0, 0.0]
    try:
        popt, _ = curve_fit(model, holds, P_e, p0=p0, maxfev=20000)
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    return abs(popt[2]) / (2 * math.pi)


def _dominant_frequency(x, y):
    """Angular frequency of the largest non-DC periodogram peak."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float) - np.mean(y)
    span = x[-1] - x[0]
    w = np.linspace(2 * math.pi / span, math.pi / np.min(np.diff(x)), 2000)
    power = np.abs(np.exp(-1j * np.outer(w, x)) @ y)
    return float(w[np.argmax(power)])


@dataclass(frozen=True)
class SwapResult:
    eta_swap: float
    t_swap: float


def swap_efficiency(params, settings=None, prepare="ideal"):
    """Phonon occupancy after the Stark pulse length that maximises it."""
    s = _settings(settings)
    if s.swap_time is not None:
        return SwapResult(stark_swap(params, s.swap_time, s, prepare)["n_m_after"], s.swap_time)
    ops, rho0 = _prepare(params, s, prepare)
    guess = math.pi / (2 * params.g_pe)

    def neg(hold):
        return -expectation(_swap(params, s, ops, rho0, hold), ops.n_m)

    res = minimize_scalar(neg, bounds=(0.5 * guess, 1.5 * guess), method="bounded",
                          options={"xatol": 0.05e-9})
    return SwapResult(-res.fun, float(res.x))


# ------------------------------------------------------------------ phonon T1

@dataclass(frozen=True)
class DecayFit:
    delays: np.ndarray
    signal: np.ndarray
    T: float
    T_sigma: float
    lower_bound: bool = False


def _fit_exponential(x, y, beat=None):
    """Fit a exp(-x/T) + c, plus a damped cosine at angular frequency ``beat``
    when the data resolve it; returns (T, sigma_T)."""
    if len(np.unique(x)) < 3:
        raise FitError("insufficient points")
    span = float(x.max() - x.min())
    p0 = [float(y[0] - y[-1]), 1.0 / max(span / 3, 1e-12), float(y[-1])]
    if beat and len(np.unique(x)) >= 8 and np.min(np.diff(np.unique(x))) * beat < math.pi:
        # leftover qubit amplitude beats against the phonon while detuned
        def model(x, a, inv_t, c, b, w, phi, inv_t2):
            return a * np.exp(-x * inv_t) + c + b * np.exp(-x * inv_t2) * np.cos(w * x + phi)
        p0 = p0 + [0.1 * float(np.ptp(y)), beat, 0.0, p0[1]]
        lo = [-np.inf, 0, -np.inf, 0, 0.5 * beat, -np.inf, 0]
        hi = [np.inf, np.inf, np.inf, np.inf, 1.5 * beat, np.inf, np.inf]
    else:
        def model(x, a, inv_t, c):
            return a * np.exp(-x * inv_t) + c
        lo, hi = [-np.inf, 0, -np.inf], [np.inf, np.inf, np.inf]
    try:
        popt, pcov = curve_fit(model, x, y, p0=p0, maxfev=20000, bounds=(lo, hi))
    except RuntimeError as exc:
        raise FitError(str(exc)) from exc
    inv_t = popt[1]
    sig = math.sqrt(max(pcov[1, 1], 0.0))
    if inv_t <= 0 or not math.isfinite(inv_t):
        return math.inf, math.inf
    return 1.0 / inv_t, sig / inv_t**2


def phonon_T1(params, delays, settings=None):
    """Swap, wait, swap back: fit the qubit population decay versus delay.

    An imperfect swap leaves some amplitude in the qubit, which beats
    against the phonon at the dressed detuning while waiting. The beat is
    fitted alongside the decay when the delay spacing resolves it (roughly
    under 45 ns at the default detuning); coarser grids get a plain
    exponential and a biased T1.
    """
    s = _settings(settings)
    delays = np.asarray(delays, dtype=float)
    if len(np.unique(delays)) < 3:
        raise FitError("insufficient points")
    t_swap = s.swap_time or swap_efficiency(params, s).t_swap
    ops, rho = _prepare(params, s, "ideal")
    first = PulseSequence([_stark(s, t_swap), Idle(max(delays.max(), 1e-12))],
                          s.qubit_detuning, s.repetition_period)
    model = build_model(params, first, ops=ops)
    unique = np.unique(np.concatenate([[0.0], delays]))
    traj = evolve(model, rho, np.concatenate([[0.0], t_swap + unique]), s.dt)
    waited = traj.states[1:][np.searchsorted(unique, delays)]

    second = PulseSequence([_stark(s, t_swap)], s.qubit_detuning, s.repetition_period)
    model2 = build_model(params, second, ops=ops)
    sig = np.array([
        expectation(evolve_to(model2, r, 0.0, t_swap, s.dt), ops.sigma_ee) for r in waited])
    beat = math.hypot(s.qubit_detuning, 2 * params.g_pe)
    T, T_sig = _fit_exponential(delays, sig, beat)
    return DecayFit(delays, sig, T, T_sig, lower_bound=T > delays.max())


# --------------------------------------------------------------------- Ramsey

def ramsey(params, delays, settings=None, detuning=hz(2e6)):
    """Ramsey fringes with pi/2 pulses detuned by ``detuning`` from the qubit.

    The first pulse and the free evolution are integrated once; the second
    pulse is applied to each waited state with its phase advanced to where
    the drive oscillator would be at that time.

    Returns (DecayFit with T = T2*, fringe frequency in Hz).
    """
    s = _settings(settings)
    delays = np.asarray(delays, dtype=float)
    if len(np.unique(delays)) < 5:
        raise FitError("insufficient points")
    if np.any(delays < 0):
        raise ValueError("delays must be non-negative")
    half = 0.5 * s.pi_time
    ops = build_operators(2)
    first = _pi_pulse(s, half, detuning=detuning)
    seq = PulseSequence([first, Idle(max(delays.max(), 1e-12))], s.bias_detuning,
                        s.repetition_period)
    model = decoupled_model(params, seq, ops=ops)
    unique = np.unique(delays)
    grid = np.concatenate([[0.0], first.duration + unique])
    traj = evolve(model, ops.basis_state(0, 0), grid, s.dt)
    waited = traj.states[1:][np.searchsorted(unique, delays)]

    rate = s.bias_detuning + detuning
    P = np.empty(len(delays))
    for i, (tau, rho) in enumerate(zip(delays, waited)):
        start = first.duration + tau
        second = _pi_pulse(s, half, phase=-rate * start, detuning=detuning)
        seq2 = PulseSequence([second], s.bias_detuning, s.repetition_period)
        model2 = decoupled_model(params, seq2, ops=ops)
        out = evolve_to(model2, rho, 0.0, second.duration, s.dt)
        P[i] = expectation(out, ops.sigma_ee)
    # the fixed pulse spacing offset is absorbed by the fitted phase
    popt, pcov = _fit_damped_cosine(delays, P, abs(detuning))
    inv_t = popt[4]
    T = 1.0 / inv_t if inv_t > 0 else math.inf
    T_sig = math.sqrt(max(pcov[4, 4], 0.0)) / inv_t**2 if inv_t > 0 else math.inf
    return DecayFit(delays, P, T, T_sig, lower_bound=T > delays.max()), popt[2] / (2 * math.pi)


# ------------------------------------------------------------- transduction

@dataclass
class TransductionTrace:
    """Readout-window quantities of one transduction shot."""

    qubit_drive: float
    occupancy_at_readout: float
    t: np.ndarray             # window-local time grid
    n_c: np.ndarray
    n_m: np.ndarray
    P_e: np.ndarray
    flux_red: np.ndarray | None = None
    t_swap: float = 0.0
    warnings: list = field(default_factory=list)

    @property
    def tau_ro(self):
        return float(self.t[-1] - self.t[0])


def _resize_phonons(rho, ops_from, ops_to):
    """Embed a state into a larger phonon truncation (extra levels empty)."""
    a, b = ops_from.N_m, ops_to.N_m
    r = rho.reshape(2, a, 2, a)
    out = np.zeros((2, b, 2, b), dtype=complex)
    out[:, :a, :, :a] = r
    return out.reshape(2 * b, 2 * b)


def transduction_sequence(params, qubit_drive, tau_ro=None, settings=None,
                          heating=None, chain=None, qp=None, t_swap=None):
    """Drive, swap, then read the mechanics out with a red-sideband pulse.

    The drive and swap are simulated at ``settings.N_m`` phonon levels; the
    state is then embedded into ``settings.N_m_readout`` levels for the
    readout window, where the back-action and hot-bath channels act.
    """
    s = _settings(settings)
    tau_ro = s.tau_ro if tau_ro is None else tau_ro
    if t_swap is None:
        t_swap = s.swap_time or swap_efficiency(params, s, prepare="pulse").t_swap
    notes = []

    ops = build_operators(s.N_m)
    segs = []
    rho = DensityMatrix(ops.basis_state(0, 0), ops.dims)
    # segment by segment, so the steps match the standalone swap exactly
    if qubit_drive > 0:
        segs.append(_pi_pulse(s, qubit_drive))
        rho = _drive(params, s, ops, rho, qubit_drive)
    segs.append(_stark(s, t_swap))
    rho = _swap(params, s, ops, rho, t_swap)
    occupancy = expectation(rho, ops.n_m)

    readout = OpticalReadout(tau_ro, s.n_c, min(s.readout_rise, tau_ro), 0.0)
    full = PulseSequence(segs + [readout], s.qubit_detuning, s.repetition_period)
    if qp is not None:
        budget = repetition_budget(full, qp)
        if not budget.operating_ok:
            msg = ("repetition period below the QP recovery time "
                   f"({budget.recovery_time * 1e3:.2f} ms); see environment.qp_recovery")
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
            notes.append(msg)

    ro_seq = PulseSequence([readout], s.qubit_detuning, s.repetition_period)
    ops_ro = build_operators(max(s.N_m_readout, s.N_m))
    rho_ro = _resize_phonons(rho.rho, ops, ops_ro)
    ro_model = build_model(params, ro_seq, ops=ops_ro, heating=heating)
    n_steps = max(1, math.ceil(tau_ro / s.dt - 1e-9))
    grid = np.linspace(0.0, tau_ro, n_steps + 1)
    traj = evolve(ro_model, rho_ro, grid, s.dt)
    n_m = np.clip(traj.expect(ops_ro.n_m), 0.0, None)
    n_c = ro_seq.sample("n_c", grid)
    flux = scattering_rate("red", n_m, n_c, params, chain) if chain is not None else None
    return TransductionTrace(qubit_drive, occupancy, grid, n_c, n_m,
                             traj.expect(ops_ro.sigma_ee), flux, t_swap, notes)
