"""
Piecewise-constant control waveforms and baseline composite sequences.

A :class:`ControlPulse` stores a uniform slice grid of Rabi amplitudes and
drive phases.  The drive Hamiltonian of slice ``m`` is::

    H_m = omega[m] * (cos(phi[m]) sx + sin(phi[m]) sy) / 2

Baseline sequences (primitive, CORPSE, BB1, reduced CinBB) are built from
constant-amplitude segments.  Segments of unequal length are laid on the
coarsest uniform grid that is commensurate with every segment boundary, so
the waveform is exact whenever such a grid exists.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

__all__ = [
    "ControlPulse",
    "RotationSpec",
    "primitive",
    "corpse",
    "bb1",
    "reduced_cinbb",
    "from_segments",
    "resample",
    "save_pulse",
    "load_pulse",
]

# Relative slack when checking |omega| <= omega_max after arithmetic.
_AMP_RTOL = 1e-12


def wrap_phase(phi):
    """Wrap angles to [-pi, pi]."""
    return np.angle(np.exp(1j * np.asarray(phi, dtype=float)))


@dataclass(frozen=True, eq=False)
class ControlPulse:
    """Piecewise-constant amplitude/phase waveform on a uniform slice grid.

    Parameters
    ----------
    omega : array_like, shape (M,)
        Rabi amplitude per slice in rad/s.
    phi : array_like, shape (M,)
        Drive phase per slice in rad.  Stored wrapped to [-pi, pi].
    tau : float
        Slice duration in s.
    omega_max : float
        Amplitude bound in rad/s.
    """

    omega: np.ndarray
    phi: np.ndarray
    tau: float
    omega_max: float

    def __post_init__(self):
        omega = np.array(self.omega, dtype=float).reshape(-1)
        phi = np.array(self.phi, dtype=float).reshape(-1)
        if omega.size < 1:
            raise ValueError("a pulse needs at least one slice")
        if phi.shape != omega.shape:
            raise ValueError("omega and phi must have the same length")
        if not (self.tau > 0 and np.isfinite(self.tau)):
            raise ValueError(f"tau must be positive, got {self.tau!r}")
        if not (self.omega_max > 0 and np.isfinite(self.omega_max)):
            raise ValueError(f"omega_max must be positive, got {self.omega_max!r}")
        if not np.all(np.isfinite(omega)) or not np.all(np.isfinite(phi)):
            raise ValueError("non-finite pulse values")
        peak = float(np.max(np.abs(omega)))
        if peak > self.omega_max * (1.0 + _AMP_RTOL):
            raise ValueError(
                f"slice amplitude {peak:.6g} exceeds omega_max {self.omega_max:.6g}"
            )
        omega.setflags(write=False)
        phi = wrap_phase(phi)
        phi.setflags(write=False)
        object.__setattr__(self, "omega", omega)
        object.__setattr__(self, "phi", phi)
        object.__setattr__(self, "tau", float(self.tau))
        object.__setattr__(self, "omega_max", float(self.omega_max))

    @property
    def M(self) -> int:
        return int(self.omega.size)

    @property
    def T(self) -> float:
        return self.M * self.tau

    @property
    def t_start(self) -> np.ndarray:
        return self.tau * np.arange(self.M)

    @property
    def midpoints(self) -> np.ndarray:
        return self.tau * (np.arange(self.M) + 0.5)

    @property
    def field(self) -> np.ndarray:
        """Complex drive envelope ``omega * exp(i phi)`` per slice."""
        return self.omega * np.exp(1j * self.phi)

    def __repr__(self):
        return (
            f"ControlPulse(M={self.M}, tau={self.tau:.4g}, T={self.T:.4g}, "
            f"omega_max={self.omega_max:.4g})"
        )


@dataclass(frozen=True)
class RotationSpec:
    """Target rotation by ``angle`` about the in-plane axis at ``axis_phase``."""

    angle: float
    axis_phase: float = 0.0

    def __post_init__(self):
        if not (0.0 < self.angle <= 2.0 * np.pi + 1e-12):
            raise ValueError(f"angle must lie in (0, 2pi], got {self.angle!r}")
        if not (-np.pi - 1e-12 <= self.axis_phase <= np.pi + 1e-12):
            raise ValueError(f"axis_phase must lie in [-pi, pi], got {self.axis_phase!r}")

    def unitary(self) -> np.ndarray:
        """Ideal SU(2) target ``exp(-i angle (cos a sx + sin a sy) / 2)``."""
        c, s = math.cos(self.angle / 2), math.sin(self.angle / 2)
        a = self.axis_phase
        return np.array(
            [[c, -1j * s * np.exp(-1j * a)], [-1j * s * np.exp(1j * a), c]]
        )


def _check(omega_max, M=1):
    if not (omega_max > 0):
        raise ValueError(f"omega_max must be positive, got {omega_max!r}")
    if int(M) != M or M < 1:
        raise ValueError(f"M must be a positive integer, got {M!r}")


def _uniform_grid(durations: np.ndarray, max_slices: int, rtol: float = 1e-9):
    """Smallest slice count whose grid contains every segment boundary."""
    total = durations.sum()
    for n in range(len(durations), max_slices + 1):
        counts = durations * n / total
        rounded = np.rint(counts)
        if np.all(rounded >= 1) and np.all(np.abs(counts - rounded) < rtol * n):
            return rounded.astype(int)
    return None


def from_segments(
    segments: Sequence[tuple[float, float]],
    omega_max: float,
    max_slices: int = 4096,
) -> ControlPulse:
    """Build a full-amplitude pulse from ``(rotation angle, phase)`` segments.

    Each segment is driven at ``omega_max`` for ``angle / omega_max``.  When
    no commensurate grid with at most ``max_slices`` slices exists the
    segments are resampled onto ``max_slices`` slices.
    """
    _check(omega_max)
    angles = np.array([s[0] for s in segments], dtype=float)
    phases = np.array([s[1] for s in segments], dtype=float)
    if angles.size == 0 or np.any(angles <= 0):
        raise ValueError("segments need positive rotation angles")
    durations = angles / omega_max
    counts = _uniform_grid(durations, max_slices)
    if counts is not None:
        tau = durations.sum() / counts.sum()
        return ControlPulse(
            np.full(counts.sum(), omega_max), np.repeat(phases, counts), tau, omega_max
        )
    edges = np.concatenate([[0.0], np.cumsum(durations)])
    return _average_onto_grid(edges, omega_max * np.exp(1j * phases), max_slices, omega_max)


def primitive(spec: RotationSpec, omega_max: float, M: int = 1) -> ControlPulse:
    """Square pulse at full amplitude, split into ``M`` equal slices."""
    _check(omega_max, M)
    tau = spec.angle / omega_max / M
    return ControlPulse(np.full(M, omega_max), np.full(M, spec.axis_phase), tau, omega_max)


def corpse_segments(spec: RotationSpec):
    a, A = spec.axis_phase, spec.angle
    k = math.asin(math.sin(A / 2) / 2)
    return [
        (2 * np.pi + A / 2 - k, a),
        (2 * np.pi - 2 * k, a + np.pi),
        (A / 2 - k, a),
    ]


def bb1_inserted_segments(spec: RotationSpec):
    a = spec.axis_phase
    p1 = math.acos(-spec.angle / (4 * np.pi))
    return [(np.pi, a + p1), (2 * np.pi, a + 3 * p1), (np.pi, a + p1)]


def corpse(spec: RotationSpec, omega_max: float) -> ControlPulse:
    """CORPSE: three segments cancelling static detuning to first order."""
    return from_segments(corpse_segments(spec), omega_max)


def bb1(spec: RotationSpec, omega_max: float) -> ControlPulse:
    """BB1: pi(phi1) 2pi(3 phi1) pi(phi1) followed by the target rotation.

    Cancels static amplitude error to second order.
    """
    segs = bb1_inserted_segments(spec) + [(spec.angle, spec.axis_phase)]
    return from_segments(segs, omega_max)


def reduced_cinbb(spec: RotationSpec, omega_max: float) -> ControlPulse:
    """CORPSE in BB1, reduced form: the target rotation of BB1 is replaced
    by CORPSE and the BB1 correction block follows it."""
    segs = corpse_segments(spec) + bb1_inserted_segments(spec)
    return from_segments(segs, omega_max)


def _average_onto_grid(edges, field, M_new, omega_max):
    """Time-weighted average of a piecewise-constant complex field."""
    edges = np.asarray(edges, dtype=float)
    field = np.asarray(field, dtype=complex)
    T = edges[-1] - edges[0]
    cum = np.concatenate([[0.0], np.cumsum(field * np.diff(edges))])
    new_edges = edges[0] + T * np.arange(M_new + 1) / M_new
    # cumulative integral is piecewise linear in t
    integ = np.interp(new_edges, edges, cum.real) + 1j * np.interp(new_edges, edges, cum.imag)
    tau = T / M_new
    avg = np.diff(integ) / tau
    omega = np.minimum(np.abs(avg), omega_max)
    phi = np.angle(avg)
    # Slices fully inside one old slice keep the exact old value.
    idx_lo = np.searchsorted(edges, new_edges[:-1], side="right") - 1
    idx_hi = np.searchsorted(edges, new_edges[1:], side="left") - 1
    inside = (idx_lo == idx_hi) & (idx_lo >= 0) & (idx_lo < field.size)
    if np.any(inside):
        src = field[idx_lo[inside]]
        omega[inside] = np.abs(src)
        phi[inside] = np.angle(src)
    return ControlPulse(omega, phi, tau, omega_max)


def resample(pulse: ControlPulse, M_new: int) -> ControlPulse:
    """Resample onto ``M_new`` uniform slices with the same total duration.

    New slices straddling an old boundary receive the time-weighted mean of
    the complex drive field, which keeps the accumulated rotation close to
    the original and never exceeds the amplitude bound.
    """
    if int(M_new) != M_new or M_new < 1:
        raise ValueError(f"M_new must be a positive integer, got {M_new!r}")
    M_new = int(M_new)
    if M_new == pulse.M:
        return pulse
    if M_new % pulse.M == 0:
        r = M_new // pulse.M
        return ControlPulse(
            np.repeat(pulse.omega, r), np.repeat(pulse.phi, r), pulse.tau / r, pulse.omega_max
        )
    edges = pulse.tau * np.arange(pulse.M + 1)
    return _average_onto_grid(edges, pulse.field, M_new, pulse.omega_max)


def save_pulse(pulse: ControlPulse, path, header: str | None = None) -> None:
    """Write ``t_start,omega_rad_s,phi_rad`` CSV plus a ``.json`` sidecar."""
    path = Path(path)
    lines = []
    if header:
        lines.append(f"# {header}")
    lines.append("t_start,omega_rad_s,phi_rad")
    for t, w, p in zip(pulse.t_start, pulse.omega, pulse.phi):
        lines.append(f"{float(t)!r},{float(w)!r},{float(p)!r}")
    path.write_text("\n".join(lines) + "\n")
    meta = {"omega_max": float(pulse.omega_max), "tau": float(pulse.tau), "M": int(pulse.M),
            "T": float(pulse.T)}
    if header:
        meta["header"] = header
    path.with_suffix(".json").write_text(json.dumps(meta, indent=2) + "\n")


def load_pulse(path) -> ControlPulse:
    """Read a pulse written by :func:`save_pulse`."""
    path = Path(path)
    lines = [ln for ln in path.read_text().splitlines() if ln and not ln.startswith("#")]
    if not lines or lines[0].strip() != "t_start,omega_rad_s,phi_rad":
        raise ValueError(f"{path}: missing pulse CSV header")
    arr = np.array([[float(x) for x in ln.split(",")] for ln in lines[1:]]).reshape(-1, 3)
    meta = json.loads(path.with_suffix(".json").read_text())
    if arr.shape[0] != meta["M"]:
        raise ValueError(f"{path}: {arr.shape[0]} rows but sidecar says M={meta['M']}")
    return ControlPulse(arr[:, 1], arr[:, 2], meta["tau"], meta["omega_max"])
