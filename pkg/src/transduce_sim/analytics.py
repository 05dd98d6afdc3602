"""Closed-form spectroscopy and calibration relations.

Sideband scattering rates, optomechanical readout efficiency, sideband
asymmetry thermometry, the qubit/mechanics avoided crossing, the thermal
noise power spectral density and the linewidth-versus-power fit of g_om.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import backaction_rate, to_hz, transmon_frequency
from .errors import EstimatorError, FitError


@dataclass(frozen=True)
class DetectionChain:
    """Optical collection and detection efficiencies.

    ``eta_sys_measured`` is the independently measured system efficiency;
    when set it takes precedence over the product of the listed factors,
    which leaves out unlisted losses. ``envelope_factor`` rescales the
    detected flux to account for the pump turn-on dynamics.
    """

    eta_kappa: float
    eta_cplr: float = 0.65
    eta_tran: float = 0.03
    eta_spd: float = 0.85
    dark_rate: float = 10.0
    eta_sys_measured: float | None = None
    envelope_factor: float = 1.0

    def __post_init__(self):
        for name in ("eta_kappa", "eta_cplr", "eta_tran", "eta_spd"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        if self.eta_sys_measured is not None:
            if not 0.0 <= self.eta_sys_measured <= min(self.eta_cplr, self.eta_tran, self.eta_spd):
                raise ValueError("measured eta_sys must not exceed any of its factors")
        if self.dark_rate < 0:
            raise ValueError("dark_rate must be non-negative")
        if self.envelope_factor < 0:
            raise ValueError("envelope_factor must be non-negative")

    @property
    def eta_sys(self):
        if self.eta_sys_measured is not None:
            return self.eta_sys_measured
        return self.eta_cplr * self.eta_tran * self.eta_spd

    @property
    def per_phonon_scale(self):
        """Detected counts per unit of (back-action rate x time x phonon)."""
        return self.eta_kappa * self.eta_sys * self.envelope_factor


def scattering_rate(sideband, n_m, n_c, params, chain):
    """Detected photon rate (counts/s) with the pump on the red or blue sideband.

    ``n_m`` and ``n_c`` broadcast, so time-varying envelopes may be passed
    as arrays.
    """
    if sideband not in ("red", "blue"):
        raise ValueError("sideband must be 'red' or 'blue'")
    n_m = np.asarray(n_m, dtype=float)
    n_c = np.asarray(n_c, dtype=float)
    if np.any(n_m < 0) or np.any(n_c < 0):
        raise ValueError("n_m and n_c must be non-negative")
    gamma = backaction_rate(n_c, params.mode.g_om, params.kappa_o)
    vacuum = 1.0 if sideband == "blue" else 0.0
    rate = chain.dark_rate + chain.per_phonon_scale * gamma * (n_m + vacuum)
    return rate if rate.ndim else float(rate)


def readout_efficiency(tau_ro, gamma_om, kappa_m_T1):
    """Fraction of a phonon converted into scattered photons within tau_ro."""
    total = gamma_om + kappa_m_T1
    if total == 0:
        return 0.0 * np.asarray(tau_ro, dtype=float)
    return gamma_om / total * -np.expm1(-total * np.asarray(tau_ro, dtype=float))


# ------------------------------------------------------------------ thermometry

@dataclass(frozen=True)
class ThermometryResult:
    p_d: float
    p_d_sigma: float
    n_m: float
    n_m_sigma: float
    z: float = 1.0

    @property
    def p_d_ci(self):
        return (self.p_d - self.z * self.p_d_sigma, self.p_d + self.z * self.p_d_sigma)

    @property
    def n_m_ci(self):
        return (self.n_m - self.z * self.n_m_sigma, self.n_m + self.z * self.n_m_sigma)


def sideband_asymmetry(counts_red, counts_blue, dark_rate=0.0, z=1.0):
    """Per-trial detection efficiency and mean occupancy from sideband counts.

    ``p_d`` is the blue-minus-red count difference per trial; the occupancy
    is the dark-subtracted red count divided by that difference. Errors are
    Poisson, propagated to first order.
    """
    if counts_red.trials != counts_blue.trials or not math.isclose(
            counts_red.window, counts_blue.window, rel_tol=1e-12):
        raise EstimatorError("red and blue records need identical windows and trials")
    n = counts_red.trials
    k_r, k_b = float(counts_red.detected), float(counts_blue.detected)
    dark = n * dark_rate * counts_red.window
    diff = k_b - k_r
    if diff <= 0:
        raise EstimatorError("non-physical asymmetry: blue counts do not exceed red")
    red = k_r - dark
    n_m = red / diff
    var_n = ((k_b - dark) ** 2 * k_r + red**2 * k_b) / diff**4
    return ThermometryResult(diff / n, math.sqrt(k_b + k_r) / n, n_m, math.sqrt(var_n), z)


# ------------------------------------------------------------------ spectroscopy

def mode_couplings(params):
    """Per-mode qubit coupling (rad/s); the transduction mode uses g_pe."""
    return np.array([params.g_pe if i == params.mode_index else m.g_pe
                     for i, m in enumerate(params.mech_modes)])


def coupled_branches(params, qubit_freqs, couplings=None):
    """Eigenfrequencies (Hz) of the single-excitation qubit+modes manifold.

    Returns an array of shape (len(qubit_freqs), 1 + n_modes), each row
    sorted ascending. ``couplings`` (rad/s, one per mode) replaces the
    device values.
    """
    qubit_freqs = np.atleast_1d(np.asarray(qubit_freqs, dtype=float))
    f_m = np.array([to_hz(m.omega_m) for m in params.mech_modes])
    g = to_hz(mode_couplings(params) if couplings is None
              else np.asarray(couplings, dtype=float))
    n = len(f_m) + 1
    base = np.zeros((n, n))
    base[1:, 1:] = np.diag(f_m)
    base[0, 1:] = g
    base[1:, 0] = g
    out = np.empty((len(qubit_freqs), n))
    for i, fq in enumerate(qubit_freqs):
        h = base.copy()
        h[0, 0] = fq
        out[i] = np.linalg.eigvalsh(h)
    return out


def avoided_crossing(params, flux_grid):
    """Branch frequencies (Hz) versus flux ratio, via the transmon tuning curve."""
    fq = [transmon_frequency(params.qubit.E_J, params.qubit.E_c, x) for x in flux_grid]
    return np.asarray(fq), coupled_branches(params, fq)


def minimum_splitting(params, mode=None, span=20e6, points=4001):
    """Smallest gap (Hz) between adjacent branches around a mode frequency."""
    mode = params.mode_index if mode is None else mode
    f0 = to_hz(params.mech_modes[mode].omega_m)
    fq = np.linspace(f0 - span, f0 + span, points)
    br = coupled_branches(params, fq)
    f_m = sorted(to_hz(m.omega_m) for m in params.mech_modes)
    j = f_m.index(f0)
    gaps = br[:, j + 1] - br[:, j]
    return float(gaps.min())


def lorentzian(omega, center, width):
    """Unit-area Lorentzian with full width at half maximum ``width``."""
    half = 0.5 * width
    return half / math.pi / ((np.asarray(omega) - center) ** 2 + half**2)


def thermal_npsd(params, omega, n_c, occupancies=None):
    """Optically transduced thermal noise spectrum (arbitrary units).

    Each mode contributes a unit-area Lorentzian of width
    ``kappa_i_m + gamma_om`` weighted by ``g_om**2 * n_c * n_m``.
    Occupancies default to one phonon per mode.
    """
    omega = np.asarray(omega, dtype=float)
    modes = params.mech_modes
    occ = np.ones(len(modes)) if occupancies is None else np.asarray(occupancies, dtype=float)
    spectrum = np.zeros_like(omega)
    for m, n in zip(modes, occ):
        width = m.kappa_i_m + backaction_rate(n_c, m.g_om, params.kappa_o)
        spectrum += m.g_om**2 * n_c * n * lorentzian(omega, m.omega_m, width)
    return spectrum


def mode_linewidths(params, n_c):
    return np.array([m.kappa_i_m + backaction_rate(n_c, m.g_om, params.kappa_o)
                     for m in params.mech_modes])


# --------------------------------------------------------- linewidth vs power

@dataclass(frozen=True)
class LinewidthFit:
    g_om: float
    kappa_i_m: float
    slope: float


def synthetic_linewidths(kappa_i_m, g_om, kappa_o, n_c, noise=0.0, rng=None):
    n_c = np.asarray(n_c, dtype=float)
    widths = kappa_i_m + backaction_rate(n_c, g_om, kappa_o)
    if noise:
        rng = np.random.default_rng(rng)
        widths = widths * (1.0 + noise * rng.standard_normal(widths.shape))
    return widths


def fit_g_om(n_c, linewidths, kappa_o):
    """Unweighted straight-line fit of linewidth versus intracavity photons."""
    n_c = np.asarray(n_c, dtype=float)
    linewidths = np.asarray(linewidths, dtype=float)
    if len(n_c) < 2 or np.ptp(n_c) == 0:
        raise FitError("need at least two distinct pump powers")
    slope, intercept = np.polyfit(n_c, linewidths, 1)
    # treat a rise below rounding level of the linewidths as flat
    if slope * np.ptp(n_c) <= 1e-12 * np.max(np.abs(linewidths)):
        slope = 0.0
    g = math.sqrt(slope * kappa_o / 4.0)
    return LinewidthFit(g, intercept, slope)


def linewidth_vs_power(kappa_i_m, g_om, kappa_o, n_c, noise=0.0, rng=None):
    """Generate linewidths for the given coupling and fit them back."""
    widths = synthetic_linewidths(kappa_i_m, g_om, kappa_o, n_c, noise, rng)
    return fit_g_om(n_c, widths, kappa_o)


def stark_drive_amplitude(shift, drive_detuning):
    """Drive Rabi rate giving the dispersive AC-Stark ``shift``
    (``shift = Omega_d**2 / (2 Delta_d)``)."""
    if shift * drive_detuning < 0:
        raise ValueError("shift and drive detuning must share a sign")
    return math.sqrt(2.0 * shift * drive_detuning)


def stark_shift(drive_amplitude, drive_detuning):
    return drive_amplitude**2 / (2.0 * drive_detuning)
