"""Pulse segments and sequences.

A sequence is an ordered list of non-overlapping segments laid end to end.
Envelopes are evaluated lazily at arbitrary times so the integrator can
sample them at its own stage points.
"""
from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field
from itertools import accumulate

import numpy as np

from .core import hz


def _raised_cosine(x):
    """0 -> 1 smooth step on x in [0, 1]."""
    x = min(max(x, 0.0), 1.0)
    return 0.5 * (1.0 - math.cos(math.pi * x))


@dataclass(frozen=True)
class MicrowaveDrive:
    """Qubit drive of nominal length ``length``.

    The cosine edges of width ``edge`` are centred on the nominal switching
    times, so for ``length >= edge`` the pulse area is exactly
    ``omega * length``. Shorter pulses never reach full amplitude and their
    area differs. The segment occupies ``length + edge`` on the timeline.
    """

    length: float
    omega: float
    detuning: float = 0.0
    phase: float = 0.0
    edge: float = 2e-9

    kind = "microwave_drive"

    def __post_init__(self):
        if self.length < 0 or self.edge < 0 or self.omega < 0:
            raise ValueError("drive length, edge and omega must be non-negative")
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")

    @property
    def duration(self):
        return self.length + self.edge

    def amplitude(self, t):
        if self.edge == 0:
            return self.omega if 0 <= t < self.length else 0.0
        up = _raised_cosine(t / self.edge)
        down = _raised_cosine((self.length + self.edge - t) / self.edge)
        return self.omega * min(up, down)


@dataclass(frozen=True)
class StarkShift:
    """Programmed qubit frequency offset with raised-cosine rise and fall."""

    duration: float
    shift: float
    rise: float = 15e-9

    kind = "stark_shift"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")
        if 2 * self.rise > self.duration * (1 + 1e-12):
            raise ValueError("rise + fall exceeds segment duration")

    @property
    def hold(self):
        return self.duration - 2 * self.rise

    def offset(self, t):
        if self.rise == 0:
            return self.shift
        edge = min(_raised_cosine(t / self.rise),
                   _raised_cosine((self.duration - t) / self.rise))
        return self.shift * edge


@dataclass(frozen=True)
class OpticalReadout:
    """Red-sideband pump with a linear (trapezoidal) intracavity envelope."""

    duration: float
    n_c_peak: float
    rise: float = 20e-9
    fall: float = 0.0

    kind = "optical_readout"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")
        if self.n_c_peak < 0 or self.rise < 0 or self.fall < 0:
            raise ValueError("n_c_peak, rise and fall must be non-negative")
        if self.rise + self.fall > self.duration * (1 + 1e-12):
            raise ValueError("rise + fall exceeds segment duration")

    def n_c(self, t):
        scale = 1.0
        if self.rise > 0 and t < self.rise:
            scale = max(t, 0.0) / self.rise
        if self.fall > 0 and t > self.duration - self.fall:
            scale = min(scale, max(self.duration - t, 0.0) / self.fall)
        return self.n_c_peak * scale

    def integrated_n_c(self):
        """Closed-form integral of the envelope over the segment (photon*s)."""
        return self.n_c_peak * (self.duration - 0.5 * (self.rise + self.fall))


@dataclass(frozen=True)
class Idle:
    duration: float

    kind = "idle"

    def __post_init__(self):
        if self.duration <= 0:
            raise ValueError("segment duration must be positive")


SEGMENT_TYPES = {cls.kind: cls for cls in (MicrowaveDrive, StarkShift, OpticalReadout, Idle)}


@dataclass(frozen=True)
class PulseSequence:
    """Segments laid end to end starting at t = 0.

    ``qubit_detuning`` is the idle qubit frequency minus the mechanical
    frequency (rad/s); every envelope is expressed in the frame rotating at
    the mechanical frequency.
    """

    segments: tuple = ()
    qubit_detuning: float = hz(-10e6)
    repetition_period: float = 10e-3
    _starts: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "segments", tuple(self.segments))
        starts = tuple(accumulate((s.duration for s in self.segments), initial=0.0))
        object.__setattr__(self, "_starts", starts)
        if self.repetition_period < self.total_duration:
            raise ValueError("repetition period shorter than the sequence")

    @property
    def total_duration(self):
        return self._starts[-1]

    @property
    def starts(self):
        return self._starts[:-1]

    def then(self, *segments):
        return PulseSequence(self.segments + tuple(segments), self.qubit_detuning,
                             self.repetition_period)

    def window(self, index):
        """(start, stop) of segment ``index``."""
        return self._starts[index], self._starts[index + 1]

    def locate(self, t):
        """Segment active at ``t`` and the segment-local time, or (None, 0).

        Segments are half-open except the last, which owns the final instant
        so that an integrator step ending there sees the pulse, not silence.
        """
        i = bisect.bisect_right(self._starts, t) - 1
        if self.segments and t == self._starts[-1]:
            i = len(self.segments) - 1
        if i < 0 or i >= len(self.segments):
            return None, 0.0
        return self.segments[i], t - self._starts[i]

    def has(self, kind):
        return any(s.kind == kind for s in self.segments)

    def rabi_rate(self, t):
        seg, tl = self.locate(t)
        return seg.amplitude(tl) if seg is not None and seg.kind == "microwave_drive" else 0.0

    def drive_quadratures(self, t):
        """Coefficients of sigma_x and sigma_y in the drive Hamiltonian."""
        seg, tl = self.locate(t)
        if seg is None or seg.kind != "microwave_drive":
            return 0.0, 0.0
        half = 0.5 * seg.amplitude(tl)
        theta = (self.qubit_detuning + seg.detuning) * t - seg.phase
        return half * math.cos(theta), half * math.sin(theta)

    def stark(self, t):
        seg, tl = self.locate(t)
        return seg.offset(tl) if seg is not None and seg.kind == "stark_shift" else 0.0

    def qubit_offset(self, t):
        return self.qubit_detuning + self.stark(t)

    def n_c(self, t):
        seg, tl = self.locate(t)
        return seg.n_c(tl) if seg is not None and seg.kind == "optical_readout" else 0.0

    def n_c_peak(self):
        return max((s.n_c_peak for s in self.segments if s.kind == "optical_readout"),
                   default=0.0)

    def sample(self, name, t_grid):
        fn = getattr(self, name)
        return np.array([fn(t) for t in np.asarray(t_grid, dtype=float)])
