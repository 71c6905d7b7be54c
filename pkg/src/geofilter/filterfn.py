"""
Filter functions and second-order average infidelities.

For a trajectory with toggling coefficients ``c[mu, alpha](t)`` the
fragments are

    F[mu, alpha](w) = k_alpha * int_0^T c[mu, alpha](t) exp(i w t) dt

with ``k = (1/2, 1/2, 1/2)`` for gates (``Tr[(s/2)(s/2)] = 1/2``) and
``k = (1/2, -i/2, 0)`` for the transfer ``|0> -> |1>`` (matrix elements
``<0| s/2 |1>``).  The usual ``R = -i w F`` never has to be formed, which
avoids the 0/0 at DC.  The infidelity is the one-sided overlap

    1 - F = (1/pi) sum_mu sum_alpha int_0^inf S_mu(w) |F[mu, alpha](w)|^2 dw

evaluated by trapezoid quadrature on a grid refined around every spectral
feature.  Coefficients are sampled at slice midpoints; the exponential is
integrated exactly over each slice, which adds a ``sinc(w tau / 2)`` factor.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from ._quadrature import composite_nodes, trapezoid_weights
from .noise import NoiseSpectrum, SpectralAliasingError
from .pulses import ControlPulse, resample
from .su2 import GateTrajectory, integrate_trajectory, toggling_components

__all__ = [
    "FrequencyGrid",
    "FilterFunctionSet",
    "FilterCurve",
    "K_GATE",
    "K_STATE",
    "build_grid",
    "gate_fragments",
    "state_fragments",
    "fragments",
    "avg_infidelity",
    "filter_function",
    "save_filter_function",
    "fine_trajectory",
    "pulse_infidelity",
    "kernel_matrix",
]

K_GATE = np.array([0.5, 0.5, 0.5], dtype=complex)
K_STATE = np.array([0.5, -0.5j, 0.0], dtype=complex)
CHANNEL_INDEX = {"a": 0, "d": 1}
MAX_GRID_NODES = 400_000


@dataclass(frozen=True, eq=False)
class FrequencyGrid:
    """Positive quadrature nodes with trapezoid weights.

    The first weight also covers ``[0, omega[0]]`` so spectra that are flat
    towards DC are integrated correctly.
    """

    omega: np.ndarray
    weights: np.ndarray
    windows: tuple = field(default=())

    @property
    def size(self) -> int:
        return self.omega.size


def build_grid(
    spectra: Sequence[NoiseSpectrum],
    T: float,
    omega_max: float,
    density: float = 1.0,
) -> FrequencyGrid:
    """Composite grid resolving the pulse band and every spectral feature.

    Parameters
    ----------
    spectra : sequence of NoiseSpectrum
    T : float
        Pulse duration; sets the backbone range and the uniform spacing
        ``2pi / (16 T)`` that resolves oscillations of ``|F|^2``.
    omega_max : float
        Backbone extends to ``10 * omega_max``.
    density : float
        Multiplies every node count (2 doubles the grid).

    Notes
    -----
    Nodes: a log backbone (80/decade), a uniform backbone, 200 linear nodes
    in each feature window (+-10 linewidths, ohmic band), geometric offsets
    (40/decade) outward from Lorentzian windows and paired nodes straddling
    every discontinuity.

    Raises
    ------
    SpectralAliasingError
        If the grid would exceed ``MAX_GRID_NODES`` (a spectrum reaching far
        beyond the pulse bandwidth).
    """
    spectra = list(spectra)
    if not spectra:
        raise ValueError("build_grid needs at least one spectrum")
    if T <= 0 or omega_max <= 0:
        raise ValueError("T and omega_max must be positive")
    feats = [s.features() for s in spectra]
    lo = min([2 * np.pi / (10 * T)] + [f.support[0] for f in feats])
    hi = max([10 * omega_max] + [f.support[1] for f in feats])
    n_uniform = hi * 16 * T * density / (2 * np.pi)
    if n_uniform > MAX_GRID_NODES:
        raise SpectralAliasingError(
            f"spectral support up to {hi:.4g} rad/s needs ~{n_uniform:.3g} frequency nodes "
            f"over T = {T:.4g} s (limit {MAX_GRID_NODES})"
        )
    nodes = composite_nodes(
        lo,
        hi,
        feats,
        per_decade=int(round(80 * density)),
        window_nodes=int(round(200 * density)),
        tail_per_decade=int(round(40 * density)),
        uniform_step=2 * np.pi / (16 * T * density),
    )
    windows = tuple(w for f in feats for w in f.windows)
    return FrequencyGrid(nodes, trapezoid_weights(nodes), windows)


@dataclass(frozen=True, eq=False)
class FilterFunctionSet:
    """Fragments ``F[mu, alpha](omega_i)`` with ``mu`` in (a, d), ``alpha`` in (x, y, z).

    Attributes
    ----------
    kind : {'gate', 'state'}
    F : ndarray, shape (2, 3, N), complex
    grid : FrequencyGrid
    T : float
    omega_max : float or None
        Used to normalize the amplitude-channel filter function.
    """

    kind: str
    F: np.ndarray
    grid: FrequencyGrid
    T: float
    omega_max: float | None = None

    def channel(self, mu: str) -> np.ndarray:
        return self.F[CHANNEL_INDEX[mu]]


def _phase_matrix(omega, times, tau):
    # exact slice integral of exp(i w t) around each midpoint
    return tau * np.sinc(omega * tau / (2 * np.pi))[:, None] * np.exp(
        1j * np.outer(omega, times)
    )


def fragments(traj: GateTrajectory, grid: FrequencyGrid, kind: str = "gate",
              omega_max: float | None = None) -> FilterFunctionSet:
    """Fragments of ``traj`` on ``grid`` for ``kind`` 'gate' or 'state'."""
    if kind not in ("gate", "state"):
        raise ValueError(f"kind must be 'gate' or 'state', got {kind!r}")
    k = K_GATE if kind == "gate" else K_STATE
    tc = toggling_components(traj)
    c = np.stack([tc.amp, tc.det])  # (2, 3, M)
    E = _phase_matrix(grid.omega, tc.times, traj.tau)  # (N, M)
    F = np.einsum("uam,nm->uan", c, E) * k[None, :, None]
    return FilterFunctionSet(kind, F, grid, traj.T, omega_max)


def gate_fragments(traj: GateTrajectory, grid: FrequencyGrid, omega_max=None) -> FilterFunctionSet:
    """Gate fragments ``F = (1/2) int c exp(i w t)`` for all six components."""
    return fragments(traj, grid, "gate", omega_max)


def state_fragments(traj: GateTrajectory, grid: FrequencyGrid, omega_max=None) -> FilterFunctionSet:
    """Transfer fragments from ``<0|E|1>``; the z components vanish."""
    return fragments(traj, grid, "state", omega_max)


def avg_infidelity(ffs: FilterFunctionSet, spectra: Sequence[NoiseSpectrum]) -> float:
    """Second-order infidelity ``(1/pi) sum w_i S(w_i) |F(w_i)|^2``.

    Spectra on the same channel add (independent processes).
    """
    total = 0.0
    ff = {mu: np.sum(np.abs(ffs.channel(mu)) ** 2, axis=0) for mu in CHANNEL_INDEX}
    for s in spectra:
        total += float(np.sum(ffs.grid.weights * s(ffs.grid.omega) * ff[s.channel]))
    return total / np.pi


class FilterCurve(NamedTuple):
    omega: np.ndarray
    value: np.ndarray
    raw: np.ndarray


def filter_function(ffs: FilterFunctionSet, mu: str) -> FilterCurve:
    """``sum_alpha |F[mu, alpha]|^2``; ``value`` is divided by ``omega_max^2`` for mu = a."""
    raw = np.sum(np.abs(ffs.channel(mu)) ** 2, axis=0)
    value = raw
    if mu == "a":
        if not ffs.omega_max:
            raise ValueError("amplitude filter function needs omega_max on the set")
        value = raw / ffs.omega_max**2
    return FilterCurve(ffs.grid.omega, value, raw)


def save_filter_function(ffs: FilterFunctionSet, mu: str, path, header: str | None = None):
    """CSV ``omega_rad_s,ff_value,ff_raw``."""
    curve = filter_function(ffs, mu)
    lines = [f"# {header}"] if header else []
    lines.append("omega_rad_s,ff_value,ff_raw")
    lines += [f"{w!r},{v!r},{r!r}" for w, v, r in
              zip(curve.omega.tolist(), curve.value.tolist(), curve.raw.tolist())]
    Path(path).write_text("\n".join(lines) + "\n")


def fine_trajectory(pulse: ControlPulse, max_rotation: float = np.pi / 100,
                    gamma0: float = 0.0) -> GateTrajectory:
    """Trajectory on a refined copy of ``pulse`` (integer slice multiple).

    Each refined slice rotates by at most ``max_rotation``.
    """
    per = max(1, int(np.ceil(np.max(np.abs(pulse.omega)) * pulse.tau / max_rotation)))
    return integrate_trajectory(resample(pulse, pulse.M * per), gamma0)


def pulse_infidelity(pulse: ControlPulse, spectra, kind: str = "gate", grid=None,
                     max_rotation: float = np.pi / 100) -> float:
    """Filter-function infidelity of an arbitrary pulse."""
    traj = fine_trajectory(pulse, max_rotation)
    if grid is None:
        grid = build_grid(spectra, pulse.T, pulse.omega_max)
    return avg_infidelity(fragments(traj, grid, kind, pulse.omega_max), spectra)


def kernel_matrix(grid: FrequencyGrid, spectra, mu: str, times, tau) -> np.ndarray:
    """``G[m, n] = sum_i w_i S(w_i) tau^2 sinc^2 cos(w_i (t_m - t_n))``.

    With it the infidelity of channel ``mu`` is
    ``(1/pi) sum_alpha |k_alpha|^2 c_alpha^T G c_alpha``.
    """
    s = np.zeros(grid.size)
    for spec in spectra:
        if spec.channel == mu:
            s += spec(grid.omega)
    M = len(times)
    if not np.any(s):
        return np.zeros((M, M))
    keep = s > 0
    om = grid.omega[keep]
    ws = grid.weights[keep] * s[keep] * (tau * np.sinc(om * tau / (2 * np.pi))) ** 2
    ph = np.outer(om, times)
    C, S = np.cos(ph), np.sin(ph)
    G = (C * ws[:, None]).T @ C + (S * ws[:, None]).T @ S
    return 0.5 * (G + G.T)
