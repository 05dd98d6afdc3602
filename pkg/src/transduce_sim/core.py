"""Device parameters, truncated operators and closed-form device relations.

Internally every frequency and rate is angular (rad/s) and every time is in
seconds. Configuration files and the CLI speak ordinary frequency (Hz); the
conversion happens once, in :mod:`transduce_sim.config`.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property

import numpy as np
from scipy import constants

from .errors import DomainError, ResourceError, ValidityError

TWO_PI = 2.0 * math.pi
MAX_DIMENSION = 512


def hz(f):
    """Ordinary frequency (Hz) to angular rate (rad/s)."""
    return TWO_PI * f


def to_hz(w):
    return w / TWO_PI


def bose_einstein(omega, temperature):
    """Thermal occupancy of a bosonic mode at angular frequency ``omega``."""
    if temperature <= 0:
        return 0.0
    x = constants.hbar * omega / (constants.k * temperature)
    return 1.0 / math.expm1(x)


@dataclass(frozen=True)
class MechanicalMode:
    omega_m: float
    g_om: float
    kappa_i_m: float
    T1_m: float
    # qubit coupling used by the spectroscopy layer; the transduction mode
    # takes DeviceParams.g_pe instead
    g_pe: float = 0.0

    @property
    def kappa_m_T1(self):
        return 1.0 / self.T1_m


@dataclass(frozen=True)
class QubitParams:
    E_J: float  # Hz (E_J / h)
    E_c: float  # Hz
    T1_q: float
    T2s_q: float
    kappa_e_q: float
    kappa_e_q_alt: float | None = None

    @property
    def gamma_phi(self):
        """Pure dephasing rate assuming white frequency noise."""
        return max(1.0 / self.T2s_q - 0.5 / self.T1_q, 0.0)


@dataclass(frozen=True)
class DeviceParams:
    g_pe: float
    mech_modes: tuple[MechanicalMode, ...]
    omega_c: float
    kappa_i_o: float
    kappa_e_o: float
    qubit: QubitParams
    T_f: float
    mode_index: int = 0

    def __post_init__(self):
        object.__setattr__(self, "mech_modes", tuple(self.mech_modes))
        self.validate()

    def validate(self):
        rates = {
            "g_pe": self.g_pe,
            "omega_c": self.omega_c,
            "kappa_i_o": self.kappa_i_o,
            "kappa_e_o": self.kappa_e_o,
            "qubit.E_J": self.qubit.E_J,
            "qubit.E_c": self.qubit.E_c,
            "qubit.T1_q": self.qubit.T1_q,
            "qubit.T2s_q": self.qubit.T2s_q,
            "qubit.kappa_e_q": self.qubit.kappa_e_q,
            "T_f": self.T_f,
        }
        for i, m in enumerate(self.mech_modes):
            for name in ("omega_m", "g_om", "kappa_i_m", "T1_m"):
                rates[f"mech_modes[{i}].{name}"] = getattr(m, name)
        for name, value in rates.items():
            if not (value > 0 and math.isfinite(value)):
                raise ValidityError(f"{name} must be strictly positive, got {value!r}")
        if not self.mech_modes:
            raise ValidityError("at least one mechanical mode is required")
        if not 0 <= self.mode_index < len(self.mech_modes):
            raise ValidityError(f"mode_index {self.mode_index} out of range")
        if self.qubit.T2s_q > 2.0 * self.qubit.T1_q * (1 + 1e-12):
            raise ValidityError("T2s_q must not exceed 2*T1_q")
        if self.mode.omega_m <= self.kappa_o:
            raise ValidityError(
                "resolved-sideband condition violated: omega_m <= kappa_o "
                f"({to_hz(self.mode.omega_m):.4g} Hz vs {to_hz(self.kappa_o):.4g} Hz)"
            )

    @property
    def kappa_o(self):
        return self.kappa_i_o + self.kappa_e_o

    @property
    def eta_kappa(self):
        return self.kappa_e_o / self.kappa_o

    @property
    def mode(self):
        """The mechanical mode used for transduction."""
        return self.mech_modes[self.mode_index]

    @property
    def n_f(self):
        return bose_einstein(self.mode.omega_m, self.T_f)

    def with_mode(self, **changes):
        modes = list(self.mech_modes)
        modes[self.mode_index] = replace(modes[self.mode_index], **changes)
        return replace(self, mech_modes=tuple(modes))

    def with_qubit(self, **changes):
        return replace(self, qubit=replace(self.qubit, **changes))


def transmon_frequency(E_J, E_c, flux_ratio=0.0):
    """Qubit transition frequency (Hz) of a flux-tunable symmetric transmon.

    Uses the asymptotic transmon expression with an effective Josephson
    energy ``E_J |cos(pi * flux_ratio)|``.
    """
    if E_J <= 0 or E_c <= 0:
        raise DomainError("E_J and E_c must be positive")
    ej = E_J * abs(math.cos(math.pi * flux_ratio))
    f = math.sqrt(8.0 * ej * E_c) - E_c
    if not f > 0:
        raise DomainError("qubit frequency collapsed")
    return f


def flux_for_frequency(E_J, E_c, f_q):
    """Smallest non-negative flux ratio tuning the transmon to ``f_q`` (Hz)."""
    ej = (f_q + E_c) ** 2 / (8.0 * E_c)
    if ej > E_J:
        raise DomainError("target frequency above the sweet spot")
    return math.acos(ej / E_J) / math.pi


def backaction_rate(n_c, g_om, kappa_o):
    """Optomechanical back-action damping 4 n_c g_om^2 / kappa_o (rad/s)."""
    if kappa_o == 0:
        raise ZeroDivisionError("kappa_o must be non-zero")
    return 4.0 * n_c * g_om**2 / kappa_o


def cooperativity(n_c, g_om, kappa_o, kappa_m):
    return backaction_rate(n_c, g_om, kappa_o) / kappa_m


def _destroy(n):
    return np.diag(np.sqrt(np.arange(1, n, dtype=float)), 1).astype(complex)


@dataclass(frozen=True)
class OperatorSet:
    """Embedded operators on qubit (x) phonon [(x) photon].

    Qubit basis ordering is (|g>, |e>); ``sigma_ge = |g><e|`` lowers.
    """

    N_m: int
    N_o: int | None = None

    @property
    def dims(self):
        return (2, self.N_m) if self.N_o is None else (2, self.N_m, self.N_o)

    @property
    def dim(self):
        return int(np.prod(self.dims))

    def _embed(self, op, slot):
        mats = [np.eye(d, dtype=complex) for d in self.dims]
        mats[slot] = op
        out = mats[0]
        for m in mats[1:]:
            out = np.kron(out, m)
        out.setflags(write=False)
        return out

    @cached_property
    def identity(self):
        return np.eye(self.dim, dtype=complex)

    @cached_property
    def sigma_ge(self):
        return self._embed(np.array([[0, 1], [0, 0]], dtype=complex), 0)

    @cached_property
    def sigma_eg(self):
        return self.sigma_ge.conj().T

    @cached_property
    def sigma_ee(self):
        return self._embed(np.diag([0, 1]).astype(complex), 0)

    @cached_property
    def sigma_x(self):
        return self.sigma_ge + self.sigma_eg

    @cached_property
    def sigma_y(self):
        return -1j * (self.sigma_eg - self.sigma_ge)

    @cached_property
    def b(self):
        return self._embed(_destroy(self.N_m), 1)

    @cached_property
    def n_m(self):
        return self.b.conj().T @ self.b

    @cached_property
    def a(self):
        if self.N_o is None:
            raise AttributeError("optical mode not modeled")
        return self._embed(_destroy(self.N_o), 2)

    @cached_property
    def n_o(self):
        return self.a.conj().T @ self.a

    def basis_state(self, qubit=0, phonons=0, photons=0):
        """Density matrix of the product state |qubit, phonons[, photons]>."""
        idx = qubit * self.N_m + phonons
        if self.N_o is not None:
            idx = idx * self.N_o + photons
        rho = np.zeros((self.dim, self.dim), dtype=complex)
        rho[idx, idx] = 1.0
        return rho


def build_operators(N_m=4, N_o=None, max_dim=MAX_DIMENSION):
    if N_m < 2:
        raise ValueError("N_m must be at least 2")
    if N_o is not None and N_o < 2:
        raise ValueError("N_o must be at least 2 when the optical mode is kept")
    dim = 2 * N_m * (N_o or 1)
    if dim > max_dim:
        raise ResourceError(f"Hilbert space dimension {dim} exceeds ceiling {max_dim}")
    return OperatorSet(N_m=N_m, N_o=N_o)
