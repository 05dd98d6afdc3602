"""Monte Carlo photon counting and the transduction estimators.

Counts are drawn with a counter-based generator (Philox) keyed by
``(seed, stream, block)``, where a block is a fixed run of trials and the
stream separates records drawn under one seed. Block draws are
independent of each other, so any partition of blocks over workers gives
bit-identical totals.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from .errors import FitError

BLOCK_TRIALS = 1 << 24
MULTI_PHOTON_LIMIT = 0.1


def worker_count(default=None):
    env = os.environ.get("TRANSDUCE_SIM_THREADS")
    if env:
        return max(1, int(env))
    return default or min(8, os.cpu_count() or 1)


@dataclass(frozen=True)
class CountRecord:
    trials: int
    detected: int
    window: float
    seed: int
    mean_per_trial: float = field(default=float("nan"), compare=False)

    def __post_init__(self):
        if self.trials <= 0:
            raise ValueError("trials must be positive")
        if self.detected < 0:
            raise ValueError("detected counts must be non-negative")

    @property
    def probability(self):
        return self.detected / self.trials


def integrate_flux(flux, tau_ro, t=None):
    """Mean counts per trial from a rate that is constant, callable, or sampled."""
    if t is not None:
        flux = np.asarray(flux, dtype=float)
        t = np.asarray(t, dtype=float)
        if np.any(flux < 0):
            raise ValueError("flux must be non-negative")
        mask = t <= t[0] + tau_ro * (1 + 1e-12)
        return float(trapezoid(flux[mask], t[mask]))
    if callable(flux):
        # Gauss-Legendre on the window; envelopes here are piecewise smooth
        x, w = np.polynomial.legendre.leggauss(64)
        ts = 0.5 * tau_ro * (x + 1.0)
        vals = np.array([flux(ti) for ti in ts])
        if np.any(vals < 0):
            raise ValueError("flux must be non-negative")
        return float(0.5 * tau_ro * np.dot(w, vals))
    if flux < 0:
        raise ValueError("flux must be non-negative")
    return float(flux) * tau_ro


def _block_generator(seed, stream, block):
    key = (int(seed) << 64) | (int(stream) << 32) | int(block)
    return np.random.Generator(np.random.Philox(key=key))


def _block_counts(seed, stream, mean, trials, start, stop):
    total = 0
    for b in range(start, stop):
        n = min(BLOCK_TRIALS, trials - b * BLOCK_TRIALS)
        total += int(_block_generator(seed, stream, b).poisson(mean * n))
    return total


def poisson_total(mean_per_trial, trials, seed, workers=None, stream=0):
    """Total counts over ``trials`` Poisson trials, reproducible per seed."""
    if not 0 <= seed < 2**64:
        raise ValueError("seed must fit in 64 bits")
    if not 0 <= stream < 2**32:
        raise ValueError("stream must fit in 32 bits")
    trials = int(trials)
    if mean_per_trial == 0:
        return 0
    n_blocks = -(-trials // BLOCK_TRIALS)
    if n_blocks >= 2**32:
        raise ValueError("too many trials")
    workers = max(1, min(worker_count(workers), n_blocks))
    if workers == 1:
        return _block_counts(seed, stream, mean_per_trial, trials, 0, n_blocks)
    edges = np.linspace(0, n_blocks, workers + 1).astype(int)
    with ThreadPoolExecutor(workers) as pool:
        parts = pool.map(lambda ij: _block_counts(seed, stream, mean_per_trial, trials, *ij),
                         zip(edges[:-1], edges[1:]))
        return sum(parts)


def simulate_counts(flux, tau_ro, trials, seed, t=None, workers=None, stream=0):
    """Photon counts for ``trials`` repetitions of a readout window.

    ``flux`` (counts/s) may be a constant, a callable of the window-local
    time, or samples on ``t``.
    """
    mean = integrate_flux(flux, tau_ro, t)
    if mean > MULTI_PHOTON_LIMIT:
        warnings.warn("multi-photon regime, SPD dead-time unmodeled", RuntimeWarning,
                      stacklevel=2)
    k = poisson_total(mean, trials, seed, workers, stream)
    return CountRecord(int(trials), k, tau_ro, seed, mean)


# ---------------------------------------------------------------- estimators

def wilson_interval(k, n, z=1.0):
    p = k / n
    denom = 1.0 + z * z / n
    centre = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    return max(0.0, centre - half), min(1.0, centre + half)


@dataclass(frozen=True)
class TransductionResult:
    P_pi: float
    P_0: float
    eta_t: float
    n_add: float
    P_pi_ci: tuple | None = None
    P_0_ci: tuple | None = None
    eta_t_ci: tuple | None = None
    n_add_ci: tuple | None = None
    significant: bool = True
    flag: str = ""

    def as_dict(self):
        out = {"P_pi": self.P_pi, "P_0": self.P_0, "eta_t": self.eta_t,
               "n_add": self.n_add, "significant": self.significant, "flag": self.flag}
        for name in ("P_pi", "P_0", "eta_t", "n_add"):
            ci = getattr(self, f"{name}_ci")
            out[f"{name}_ci"] = list(ci) if ci is not None else None
        return out


def estimate_from_probabilities(p_pi, p_0, trials_pi=None, trials_0=None, z=1.0):
    """eta_t = P_pi - P_0 and n_add = P_0 / eta_t, with optional CIs.

    Probability CIs are Wilson score intervals; eta_t and n_add intervals
    use first-order propagation of the binomial standard errors.
    """
    eta_t = p_pi - p_0
    significant = eta_t > 0
    n_add = p_0 / eta_t if significant else math.inf
    flag = "" if significant else "no significant transduction"
    if trials_pi is None or trials_0 is None:
        return TransductionResult(p_pi, p_0, eta_t, n_add, significant=significant, flag=flag)

    s_pi = math.sqrt(p_pi * (1 - p_pi) / trials_pi)
    s_0 = math.sqrt(p_0 * (1 - p_0) / trials_0)
    eta_sigma = math.hypot(s_pi, s_0)
    eta_ci = (eta_t - z * eta_sigma, eta_t + z * eta_sigma)
    if significant:
        n_sigma = math.hypot(p_pi * s_0, p_0 * s_pi) / eta_t**2
        n_ci = (n_add - z * n_sigma, n_add + z * n_sigma)
    else:
        n_ci = None
    return TransductionResult(
        p_pi, p_0, eta_t, n_add,
        wilson_interval(p_pi * trials_pi, trials_pi, z),
        wilson_interval(p_0 * trials_0, trials_0, z),
        eta_ci, n_ci, significant, flag)


def transduction_estimate(with_pi, without_pi, z=1.0):
    if not math.isclose(with_pi.window, without_pi.window, rel_tol=1e-12):
        raise ValueError("records must share the same readout window")
    return estimate_from_probabilities(with_pi.probability, without_pi.probability,
                                       with_pi.trials, without_pi.trials, z)


# ------------------------------------------------------------- optical Rabi

@dataclass(frozen=True)
class OpticalRabiFit:
    period: float
    offset: float
    amplitude: float
    phase: float
    background: float
    maximum: float
    background_ci: tuple
    maximum_ci: tuple
    amplitude_ci: tuple
    confidence: float

    def model(self, durations):
        d = np.asarray(durations, dtype=float)
        return self.offset + self.amplitude * np.cos(2 * np.pi * d / self.period + self.phase)


def optical_rabi(durations, rates, period, confidence=0.9):
    """Fixed-period sinusoid fit of detected rate versus drive duration.

    The fit is linear least squares in (offset, cos, sin) so it needs no
    initial guess. The amplitude interval is the radial projection of the
    joint two-parameter confidence region of the quadratures, clipped at 0.
    """
    d = np.asarray(durations, dtype=float)
    y = np.asarray(rates, dtype=float)
    if len(d) < 4:
        raise FitError("optical Rabi fit needs at least 4 durations")
    w = 2 * np.pi / period
    X = np.column_stack([np.ones_like(d), np.cos(w * d), np.sin(w * d)])
    coef, *_ = np.linalg.lstsq(X, y, rcond=None)
    c, a, b = coef
    resid = y - X @ coef
    dof = len(d) - 3
    s2 = float(resid @ resid) / dof if dof > 0 else 0.0
    cov = s2 * np.linalg.inv(X.T @ X)
    amp = math.hypot(a, b)
    phase = math.atan2(-b, a)

    z1 = stats.norm.ppf(0.5 + confidence / 2)
    z2 = math.sqrt(stats.chi2.ppf(confidence, 2))
    if amp > 0:
        grad = np.array([a, b]) / amp
        var_amp = float(grad @ cov[1:, 1:] @ grad)
    else:
        var_amp = 0.5 * float(cov[1, 1] + cov[2, 2])
    sig_amp = math.sqrt(max(var_amp, 0.0))

    def linear_ci(sign):
        g = np.zeros(3)
        g[0] = 1.0
        if amp > 0:
            g[1:] = sign * np.array([a, b]) / amp
        var = float(g @ cov @ g)
        centre = c + sign * amp
        half = z1 * math.sqrt(max(var, 0.0))
        return centre - half, centre + half

    return OpticalRabiFit(
        period, float(c), amp, phase, c - amp, c + amp,
        linear_ci(-1.0), linear_ci(1.0),
        (max(0.0, amp - z2 * sig_amp), amp + z2 * sig_amp), confidence)
