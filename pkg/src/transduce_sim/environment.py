"""Phenomenological optical-absorption heating and quasi-particle recovery.

Heating: during an optical pulse the mechanical mode couples to a hot bath
of occupancy ``n_p`` at a rate ``gamma_p * n_c(t)``.  The mean phonon number
then obeys

    dn/dt = -(kappa_T1 + gamma_om(t) + gamma_p(t)) n
            + kappa_T1 n_f + gamma_p(t) n_p,

which is exactly what the Lindblad hot-bath channel pair in
:func:`transduce_sim.dynamics.build_model` produces for <b^dag b>.

Quasi-particles: an optical pulse injects a QP density that decays
exponentially with lifetime ``tau_qp``; the density adds a proportional
damping rate to the qubit Rabi oscillation, and the measured contrast is
the fraction of coherent amplitude surviving one Rabi window.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy.integrate import solve_ivp, trapezoid
from scipy.optimize import brentq

DEFAULT_HOT_BATH_OCCUPANCY = 10.0


@dataclass(frozen=True)
class HeatingModel:
    """Hot-bath coupling per intracavity photon (rad/s/photon)."""

    gamma_p: float = 0.0
    n_p: float = DEFAULT_HOT_BATH_OCCUPANCY
    onset_delay: float = 0.0

    def __post_init__(self):
        if self.gamma_p < 0 or self.n_p < 0 or self.onset_delay < 0:
            raise ValueError("heating parameters must be non-negative")

    def rate(self, n_c):
        return self.gamma_p * n_c


def _as_function(x, t_grid):
    if callable(x):
        return x
    if np.ndim(x) == 0:
        value = float(x)
        return lambda t: value
    xs = np.asarray(x, dtype=float)
    return lambda t: float(np.interp(t, t_grid, xs))


def heated_occupancy(model, n_c, t_grid, kappa_m_T1, gamma_om, n_f=0.0, n0=None):
    """Mean phonon occupancy n_m(t) on ``t_grid`` under optical heating.

    ``n_c`` is the intracavity photon number and ``gamma_om`` the back-action
    rate; each may be a callable of t, a constant, or samples on ``t_grid``.
    The initial occupancy defaults to ``n_f``.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    n_c_f = _as_function(n_c, t_grid)
    gom_f = _as_function(gamma_om, t_grid)
    delay = model.onset_delay
    t0 = t_grid[0]

    def rhs(t, n):
        gp = model.rate(n_c_f(t - delay)) if t - t0 >= delay else 0.0
        return -(kappa_m_T1 + gom_f(t) + gp) * n + kappa_m_T1 * n_f + gp * model.n_p

    y0 = n_f if n0 is None else n0
    if len(t_grid) == 1:
        return np.array([y0])
    # LSODA switches to a stiff method when gamma_p * n_c is large
    sol = solve_ivp(rhs, (t_grid[0], t_grid[-1]), [y0], t_eval=t_grid, method="LSODA",
                    rtol=1e-10, atol=1e-13, max_step=(t_grid[-1] - t_grid[0]) / 50)
    return sol.y[0]


def steady_state_occupancy(model, n_c, kappa_m_T1, gamma_om, n_f=0.0):
    gp = model.rate(n_c)
    return (kappa_m_T1 * n_f + gp * model.n_p) / (kappa_m_T1 + gamma_om + gp)


def weighted_average(values, weights, t_grid):
    """Time average of ``values`` weighted by ``weights`` (e.g. the pump
    envelope), which is what a sideband-asymmetry measurement reports."""
    den = trapezoid(weights, t_grid)
    if den == 0:
        return float(np.mean(values))
    return float(trapezoid(np.asarray(values) * weights, t_grid) / den)


def calibrate_heating(target, n_c, t_grid, kappa_m_T1, gamma_om, n_f=0.0,
                      n_p=DEFAULT_HOT_BATH_OCCUPANCY, onset_delay=0.0):
    """Solve for the hot-bath coupling that gives a pump-weighted mean
    occupancy ``target`` over ``t_grid``.

    One anchor fixes one parameter; ``n_p`` stays at its supplied value.
    """
    t_grid = np.asarray(t_grid, dtype=float)
    weights = np.array([_as_function(n_c, t_grid)(t) for t in t_grid])

    def avg(gp):
        m = HeatingModel(gp, n_p, onset_delay)
        return weighted_average(heated_occupancy(m, n_c, t_grid, kappa_m_T1, gamma_om, n_f),
                                weights, t_grid)

    if target <= avg(0.0):
        return HeatingModel(0.0, n_p, onset_delay)
    if target >= max(n_p, n_f):
        raise ValueError("heating target unreachable with this hot-bath occupancy")
    hi = 1.0
    while avg(hi) < target:
        hi *= 4.0
        if hi > 1e15:
            raise ValueError("heating target unreachable with this hot-bath occupancy")
    gp = brentq(lambda g: avg(g) - target, 0.0, hi, xtol=1e-12 * hi, rtol=1e-12)
    return HeatingModel(gp, n_p, onset_delay)


# --------------------------------------------------------------- quasi-particles

@dataclass(frozen=True)
class QPModel:
    """Light-induced quasi-particle density and its effect on Rabi contrast.

    ``injection`` is the QP-induced Rabi damping accumulated over one Rabi
    window right after a reference optical pulse (dimensionless); the
    contrast is ``exp(-injection * pulse_scale * exp(-delay / tau_qp))``.
    """

    tau_qp: float
    injection: float
    rabi_window: float = 150e-9
    threshold: float = 0.95

    def __post_init__(self):
        if self.tau_qp <= 0:
            raise ValueError("tau_qp must be positive")
        if self.injection < 0:
            raise ValueError("injection must be non-negative")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")

    def density(self, delay, pulse_scale=1.0):
        return self.injection * pulse_scale * np.exp(-np.asarray(delay, dtype=float) / self.tau_qp)

    def contrast(self, delay, pulse_scale=1.0):
        return np.exp(-self.density(delay, pulse_scale))

    def recovery_time(self, pulse_scale=1.0):
        """Delay at which the contrast reaches the threshold."""
        a = self.injection * pulse_scale
        limit = -math.log(self.threshold)
        if a <= limit:
            return 0.0
        return self.tau_qp * math.log(a / limit)

    def with_lifetime(self, tau_qp):
        return replace(self, tau_qp=tau_qp)


def calibrate_qp_injection(tau_qp, recovery_time, threshold=0.95, rabi_window=150e-9):
    """QP model whose contrast crosses ``threshold`` at ``recovery_time``."""
    injection = -math.log(threshold) * math.exp(recovery_time / tau_qp)
    return QPModel(tau_qp, injection, rabi_window, threshold)


@dataclass(frozen=True)
class RecoveryCurve:
    delays: np.ndarray
    contrast: np.ndarray
    recovery_time: float
    first_recovered_delay: float | None


def qp_recovery(model, delays, pulse_scale=1.0):
    """Rabi contrast after an optical pulse versus delay.

    ``first_recovered_delay`` is the first grid delay at or above threshold;
    ``recovery_time`` is the exact crossing.
    """
    delays = np.asarray(delays, dtype=float)
    contrast = model.contrast(delays, pulse_scale)
    above = np.nonzero(contrast >= model.threshold)[0]
    first = float(delays[above[0]]) if len(above) else None
    return RecoveryCurve(delays, contrast, model.recovery_time(pulse_scale), first)


@dataclass(frozen=True)
class RepetitionBudget:
    max_rate: float
    limiting: str
    recovery_time: float
    sequence_duration: float
    operating_rate: float

    @property
    def operating_ok(self):
        return 1.0 / self.operating_rate >= max(self.recovery_time, self.sequence_duration)


def repetition_budget(seq, qp=None, pulse_scale=1.0):
    """Fastest repetition rate allowed by sequence length and QP recovery."""
    has_light = seq.n_c_peak() > 0 and pulse_scale > 0
    recovery = qp.recovery_time(pulse_scale) if (qp is not None and has_light) else 0.0
    duration = seq.total_duration
    if recovery > duration:
        return RepetitionBudget(1.0 / recovery, "qp_recovery", recovery, duration,
                                1.0 / seq.repetition_period)
    return RepetitionBudget(1.0 / duration, "sequence", recovery, duration,
                            1.0 / seq.repetition_period)
