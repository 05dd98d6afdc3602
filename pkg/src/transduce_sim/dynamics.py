"""Lindblad master-equation evolution of the qubit-phonon(-photon) system.

The state is vectorised row-major, so ``vec(A rho B) = (A kron B^T) vec(rho)``.
The generator is split into a static superoperator plus time-dependent
superoperators weighted by scalar envelopes, and advanced with fixed-step
classical RK4.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .core import OperatorSet, backaction_rate, build_operators
from .errors import IntegrationError, ValidityError

DEFAULT_DT = 0.2e-9

TRACE_TOL = 1e-8
HERMITIAN_TOL = 1e-10
POSITIVITY_TOL = 1e-8


@dataclass(frozen=True)
class DensityMatrix:
    rho: np.ndarray
    dims: tuple

    def __post_init__(self):
        rho = np.asarray(self.rho, dtype=complex)
        n = int(np.prod(self.dims))
        if rho.shape != (n, n):
            raise ValueError(f"rho shape {rho.shape} does not match dims {self.dims}")
        object.__setattr__(self, "rho", rho)

    @property
    def trace_error(self):
        return abs(np.trace(self.rho) - 1.0)

    @property
    def hermiticity_error(self):
        return float(np.max(np.abs(self.rho - self.rho.conj().T)))

    @property
    def min_eigenvalue(self):
        return float(np.linalg.eigvalsh(0.5 * (self.rho + self.rho.conj().T))[0])

    def check(self, t=0.0):
        if self.trace_error > TRACE_TOL:
            raise IntegrationError("trace", t, self.trace_error)
        if self.hermiticity_error > HERMITIAN_TOL:
            raise IntegrationError("hermiticity", t, self.hermiticity_error)
        if self.min_eigenvalue < -POSITIVITY_TOL:
            raise IntegrationError("positivity", t, self.min_eigenvalue)
        return self


def expectation(rho, observable):
    """Real expectation value trace(rho O) of a Hermitian observable."""
    if isinstance(rho, DensityMatrix):
        rho = rho.rho
    observable = np.asarray(observable)
    if rho.shape != observable.shape:
        raise ValueError(f"dimension mismatch: {rho.shape} vs {observable.shape}")
    value = np.trace(rho @ observable)
    if abs(value.imag) > 1e-9 * max(1.0, abs(value.real)):
        raise ValueError(f"expectation has imaginary part {value.imag:.3e}")
    return float(value.real)


def thermal_phonon_state(ops, n_th, qubit=0):
    """Qubit basis state times a truncated, renormalised thermal phonon state."""
    levels = np.arange(ops.N_m)
    p = (n_th / (1.0 + n_th)) ** levels if n_th > 0 else (levels == 0).astype(float)
    p = p / p.sum()
    rho = sum(pk * ops.basis_state(qubit, k) for k, pk in enumerate(p))
    return DensityMatrix(rho, ops.dims)


# ---------------------------------------------------------------- superoperators

def _commutator_super(h):
    eye = np.eye(h.shape[0])
    return -1j * (np.kron(h, eye) - np.kron(eye, h.T))


def _dissipator_super(c):
    eye = np.eye(c.shape[0])
    cdc = c.conj().T @ c
    return np.kron(c, c.conj()) - 0.5 * np.kron(cdc, eye) - 0.5 * np.kron(eye, cdc.T)


@dataclass(frozen=True)
class Channel:
    operator: np.ndarray
    rate: float
    label: str
    envelope: Callable | None = None


@dataclass(frozen=True)
class LindbladModel:
    """Hamiltonian and collapse channels, partly time dependent.

    ``td_hamiltonian`` holds ``(operator, envelope)`` pairs: the Hamiltonian at
    time t gains ``envelope(t) * operator``.  A channel with an envelope has
    instantaneous rate ``rate * envelope(t)``.
    """

    ops: OperatorSet
    hamiltonian: np.ndarray
    td_hamiltonian: tuple = ()
    channels: tuple = ()
    window: tuple = (0.0, 0.0)
    mode: str = "eliminated"
    _supers: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        for ch in self.channels:
            if ch.rate < 0:
                raise ValidityError(f"negative rate on channel {ch.label}")
        static = _commutator_super(self.hamiltonian)
        td = []
        for op, env in self.td_hamiltonian:
            td.append((_commutator_super(op), env))
        for ch in self.channels:
            if ch.rate == 0:
                continue
            sup = ch.rate * _dissipator_super(ch.operator)
            if ch.envelope is None:
                static = static + sup
            else:
                td.append((sup, ch.envelope))
        object.__setattr__(self, "_supers", (static, tuple(td)))

    @property
    def dims(self):
        return self.ops.dims

    def channel(self, label):
        for ch in self.channels:
            if ch.label == label:
                return ch
        raise KeyError(label)

    def generator(self, t):
        """Full Liouvillian superoperator at time t (for diagnostics)."""
        static, td = self._supers
        out = static.copy()
        for sup, env in td:
            out += env(t) * sup
        return out

    def rhs(self, t, v):
        static, td = self._supers
        out = static @ v
        for sup, env in td:
            c = env(t)
            if c != 0.0:
                out += c * (sup @ v)
        return out


def build_model(params, seq, mode="eliminated", N_m=4, N_o=None, heating=None,
                ops=None):
    """Assemble the Lindblad model of the device driven by ``seq``.

    Parameters
    ----------
    params : DeviceParams
    seq : PulseSequence
    mode : {"eliminated", "full-cavity"}
        Keep the optical mode explicitly or replace it by the back-action
        decay channel ``4 n_c(t) g_om^2 / kappa_o`` acting on the phonon.
    heating : HeatingModel, optional
        Adds a hot-bath channel pair on the phonon, proportional to n_c(t).
    """
    if mode not in ("eliminated", "full-cavity"):
        raise ValueError(f"unknown mode {mode!r}")
    if ops is None:
        ops = build_operators(N_m, N_o if mode == "full-cavity" else None)
    if mode == "full-cavity" and ops.N_o is None:
        raise ValueError("full-cavity mode needs an optical truncation N_o")

    mech = params.mode
    q = params.qubit
    n_f = params.n_f
    g_om, kappa_o = mech.g_om, params.kappa_o

    h0 = params.g_pe * (ops.sigma_eg @ ops.b + ops.sigma_ge @ ops.b.conj().T)
    td = [
        (ops.sigma_ee, seq.qubit_offset),
        (ops.sigma_x, lambda t: seq.drive_quadratures(t)[0]),
        (ops.sigma_y, lambda t: seq.drive_quadratures(t)[1]),
    ]
    channels = [
        Channel(ops.sigma_ge, 1.0 / q.T1_q, "qubit_decay"),
        Channel(ops.sigma_ee, 2.0 * q.gamma_phi, "qubit_dephasing"),
        Channel(ops.b, mech.kappa_m_T1 * (n_f + 1.0), "phonon_decay"),
        Channel(ops.b.conj().T, mech.kappa_m_T1 * n_f, "phonon_excitation"),
    ]

    n_c_peak = seq.n_c_peak()
    if n_c_peak > 0:
        if mode == "eliminated":
            if 4.0 * math.sqrt(n_c_peak) * g_om > kappa_o:
                raise ValidityError(
                    "adiabatic elimination invalid: 4 G_om exceeds kappa_o at peak power")
            channels.append(Channel(ops.b, backaction_rate(1.0, g_om, kappa_o),
                                    "optical_readout", seq.n_c))
        else:
            beam_splitter = ops.a.conj().T @ ops.b + ops.a @ ops.b.conj().T
            td.append((beam_splitter, lambda t: g_om * math.sqrt(seq.n_c(t))))
        if heating is not None and heating.gamma_p > 0:
            delay = heating.onset_delay
            env = (lambda t: seq.n_c(t - delay)) if delay else seq.n_c
            channels.append(Channel(ops.b, heating.gamma_p * (heating.n_p + 1.0),
                                    "hot_bath_decay", env))
            channels.append(Channel(ops.b.conj().T, heating.gamma_p * heating.n_p,
                                    "hot_bath_excitation", env))
    if mode == "full-cavity":
        channels.append(Channel(ops.a, kappa_o, "cavity_decay"))

    return LindbladModel(ops, h0, tuple(td), tuple(channels),
                         (0.0, seq.total_duration), mode)


# -------------------------------------------------------------------- evolution

@dataclass
class Trajectory:
    times: np.ndarray
    states: np.ndarray  # (n_t, d, d)
    dims: tuple

    def __len__(self):
        return len(self.times)

    def __getitem__(self, i):
        return DensityMatrix(self.states[i], self.dims)

    @property
    def final(self):
        return self[-1]

    def expect(self, op):
        vals = np.einsum("tij,ji->t", self.states, op)
        return vals.real

    @property
    def trace_error(self):
        return np.abs(np.einsum("tii->t", self.states) - 1.0)

    def write_csv(self, path, ops):
        cols = {"t_ns": self.times * 1e9, "P_e": self.expect(ops.sigma_ee),
                "n_m": self.expect(ops.n_m)}
        if ops.N_o is not None:
            cols["n_o"] = self.expect(ops.n_o)
        cols["trace_error"] = self.trace_error
        write_columns(path, cols)


def write_columns(path, columns):
    """CSV writer with 17 significant digits, shared by all emitters."""
    names = list(columns)
    rows = zip(*(np.asarray(columns[k]) for k in names))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(names)
        for row in rows:
            w.writerow([_fmt(x) for x in row])


def _fmt(x):
    if isinstance(x, (str, bytes)):
        return x
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def evolve(model, rho0, t_grid, max_step=DEFAULT_DT, check=True):
    """Integrate the master equation and return the states on ``t_grid``.

    Between consecutive grid points the interval is split into the fewest
    equal RK4 steps not exceeding ``max_step``; the result is therefore a
    deterministic function of its inputs.
    """
    if isinstance(rho0, DensityMatrix):
        rho0 = rho0.rho
    t_grid = np.asarray(t_grid, dtype=float)
    if t_grid.ndim != 1 or len(t_grid) == 0:
        raise ValueError("t_grid must be a non-empty 1-D array")
    if np.any(np.diff(t_grid) <= 0):
        raise ValueError("t_grid must be strictly increasing")
    d = model.ops.dim
    v = np.array(rho0, dtype=complex).reshape(d * d)
    diag = np.arange(d) * (d + 1)

    out = np.empty((len(t_grid), d, d), dtype=complex)
    out[0] = v.reshape(d, d)
    if check:
        DensityMatrix(out[0], model.dims).check(t_grid[0])
    rhs = model.rhs
    for k in range(1, len(t_grid)):
        t0, t1 = t_grid[k - 1], t_grid[k]
        n = max(1, math.ceil((t1 - t0) / max_step - 1e-9))
        h = (t1 - t0) / n
        for j in range(n):
            t = t0 + j * h
            k1 = rhs(t, v)
            k2 = rhs(t + 0.5 * h, v + 0.5 * h * k1)
            k3 = rhs(t + 0.5 * h, v + 0.5 * h * k2)
            k4 = rhs(t + h, v + h * k3)
            v = v + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            if check:
                err = abs(v[diag].sum() - 1.0)
                if err > TRACE_TOL:
                    raise IntegrationError("trace", t + h, err)
        out[k] = v.reshape(d, d)
        if check:
            DensityMatrix(out[k], model.dims).check(t1)
    return Trajectory(t_grid, out, model.dims)


def evolve_to(model, rho0, t0, t1, max_step=DEFAULT_DT, check=True):
    """Final state only, stepping straight from t0 to t1."""
    if t1 <= t0:
        r = rho0.rho if isinstance(rho0, DensityMatrix) else rho0
        return DensityMatrix(r, model.dims)
    return evolve(model, rho0, [t0, t1], max_step, check).final
