"""
SU(2) propagation, Euler-angle trajectories and toggling-frame components.

Unitaries are handled internally as unit quaternions ``(w, x, y, z)`` with
``U = w*I - i*(x sx + y sy + z sz)``, which makes per-slice exponentials
closed-form and products cheap to batch over noise realizations.

The ideal propagator is parameterized as

    U0(t) = Rz(phi_e) Ry(theta) Rz(gamma),   Rz(a) = exp(-i a sz / 2)

For a piecewise-constant pulse the slice propagator between two boundary
samples is an exact in-plane rotation only if

    tan(dphi_e / 2) = -tan(dgamma / 2) cos(theta_mid) / cos(dtheta / 2)

which reduces to ``dphi_e/dt = -dgamma/dt cos(theta)`` as the slices shrink.
:func:`phase_increment` implements this relation and
:func:`inverse_engineer` uses it to produce pulses that reproduce a
trajectory exactly on the slice grid.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pulses import ControlPulse, wrap_phase

__all__ = [
    "SX",
    "SY",
    "SZ",
    "ID2",
    "ResolutionTooCoarseError",
    "GateTrajectory",
    "TogglingComponents",
    "slice_quaternions",
    "quat_mul",
    "quat_to_matrix",
    "matrix_to_quat",
    "propagate",
    "propagate_path",
    "gate_fidelity",
    "integrate_trajectory",
    "euler_unitary",
    "phase_increment",
    "slice_rotations",
    "inverse_engineer",
    "toggling_closed_form",
    "toggling_components",
]

SX = np.array([[0, 1], [1, 0]], dtype=complex)
SY = np.array([[0, -1j], [1j, 0]], dtype=complex)
SZ = np.array([[1, 0], [0, -1]], dtype=complex)
ID2 = np.eye(2, dtype=complex)

_DEGENERATE_TOL = 1e-8


class ResolutionTooCoarseError(ValueError):
    """Raised when adjacent trajectory samples differ by more than pi/2."""


# ---------------------------------------------------------------------------
# quaternion helpers


def quat_mul(p, q):
    """Hamilton product ``p * q`` on the last axis (broadcasts)."""
    pw, px, py, pz = np.moveaxis(p, -1, 0)
    qw, qx, qy, qz = np.moveaxis(q, -1, 0)
    return np.stack(
        [
            pw * qw - px * qx - py * qy - pz * qz,
            pw * qx + px * qw + py * qz - pz * qy,
            pw * qy - px * qz + py * qw + pz * qx,
            pw * qz + px * qy - py * qx + pz * qw,
        ],
        axis=-1,
    )


def quat_conj(q):
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def quat_to_matrix(q) -> np.ndarray:
    """Quaternion(s) to 2x2 unitary matrices."""
    q = np.asarray(q, dtype=float)
    w, x, y, z = np.moveaxis(q, -1, 0)
    out = np.empty(q.shape[:-1] + (2, 2), dtype=complex)
    out[..., 0, 0] = w - 1j * z
    out[..., 0, 1] = -y - 1j * x
    out[..., 1, 0] = y - 1j * x
    out[..., 1, 1] = w + 1j * z
    return out


def matrix_to_quat(U) -> np.ndarray:
    """Inverse of :func:`quat_to_matrix` for SU(2) input."""
    U = np.asarray(U)
    a, b = U[..., 0, 0], U[..., 1, 0]
    return np.stack([a.real, -b.imag, b.real, -a.imag], axis=-1)


def slice_quaternions(omega, phi, tau, eps_a=None, eps_d=None) -> np.ndarray:
    """Per-slice propagators of ``H = W(1+eps_a)(cos phi sx + sin phi sy)/2 + eps_d sz/2``.

    Parameters
    ----------
    omega, phi : ndarray, shape (M,)
    tau : float
    eps_a, eps_d : ndarray, optional
        Noise values held constant per slice.  May carry leading batch
        dimensions, e.g. shape (B, M).

    Returns
    -------
    ndarray, shape (..., M, 4)
    """
    amp = omega if eps_a is None else omega * (1.0 + eps_a)
    hx = amp * np.cos(phi)
    hy = amp * np.sin(phi)
    hz = np.zeros_like(hx) if eps_d is None else np.broadcast_to(eps_d, np.shape(hx))
    hx, hy, hz = np.broadcast_arrays(hx, hy, hz)
    r = np.sqrt(hx * hx + hy * hy + hz * hz)
    half = 0.5 * r * tau
    # sin(r tau/2)/r, safe at r = 0
    sinc = 0.5 * tau * np.sinc(half / np.pi)
    return np.stack([np.cos(half), sinc * hx, sinc * hy, sinc * hz], axis=-1)


def _noise_values(series, M, name):
    if series is None:
        return None
    vals = getattr(series, "samples", series)
    vals = np.asarray(vals, dtype=float)
    if vals.shape[-1] < M:
        raise ValueError(f"{name} series has {vals.shape[-1]} samples, pulse needs {M}")
    return vals[..., :M]


def _ordered_product(qs):
    """Time-ordered product ``q[M-1] ... q[0]`` along axis -2 by pairwise folding."""
    qs = np.asarray(qs)
    while qs.shape[-2] > 1:
        n = qs.shape[-2]
        if n % 2:
            tail = qs[..., -1:, :]
            qs = qs[..., :-1, :]
        else:
            tail = None
        qs = quat_mul(qs[..., 1::2, :], qs[..., 0::2, :])
        if tail is not None:
            qs = np.concatenate([qs, tail], axis=-2)
    return qs[..., 0, :]


def propagate(pulse: ControlPulse, detuning=None, amplitude=None, as_quaternion=False):
    """Total propagator ``U(T)`` of a pulse with optional per-slice noise.

    Parameters
    ----------
    pulse : ControlPulse
    detuning : array_like or NoiseRealization, optional
        Detuning ``eps_d`` in rad/s, one value per slice (extra samples are
        ignored).  Leading batch axes are allowed.
    amplitude : array_like or NoiseRealization, optional
        Relative amplitude error ``eps_a`` per slice.

    Returns
    -------
    ndarray
        2x2 unitary (or batch of them), or quaternions if requested.
    """
    ed = _noise_values(detuning, pulse.M, "detuning")
    ea = _noise_values(amplitude, pulse.M, "amplitude")
    q = _ordered_product(slice_quaternions(pulse.omega, pulse.phi, pulse.tau, ea, ed))
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    return q if as_quaternion else quat_to_matrix(q)


def propagate_path(pulse: ControlPulse, as_quaternion=False):
    """Ideal propagators at every slice boundary, shape (M+1, 2, 2)."""
    qs = slice_quaternions(pulse.omega, pulse.phi, pulse.tau)
    out = np.empty((pulse.M + 1, 4))
    out[0] = (1.0, 0.0, 0.0, 0.0)
    for m in range(pulse.M):
        out[m + 1] = quat_mul(qs[m], out[m])
    out /= np.linalg.norm(out, axis=-1, keepdims=True)
    return out if as_quaternion else quat_to_matrix(out)


def gate_fidelity(target, U) -> float:
    """Trace fidelity ``|Tr(target^dag U)|^2 / 4``."""
    return np.abs(np.einsum("...ij,...ij->...", np.conj(target), U)) ** 2 / 4.0


# ---------------------------------------------------------------------------
# trajectories


@dataclass(frozen=True, eq=False)
class GateTrajectory:
    """Euler-angle path ``(theta, phi_e, gamma)`` sampled at slice boundaries."""

    theta: np.ndarray
    phi_e: np.ndarray
    gamma: np.ndarray
    tau: float

    def __post_init__(self):
        th = np.asarray(self.theta, dtype=float)
        ph = np.asarray(self.phi_e, dtype=float)
        ga = np.asarray(self.gamma, dtype=float)
        if not (th.shape == ph.shape == ga.shape) or th.ndim != 1 or th.size < 2:
            raise ValueError("theta, phi_e and gamma need equal length M+1 >= 2")
        if not self.tau > 0:
            raise ValueError("tau must be positive")
        for name, arr in (("theta", th), ("phi_e", ph), ("gamma", ga)):
            arr = arr.copy()
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        object.__setattr__(self, "tau", float(self.tau))

    @property
    def M(self) -> int:
        return self.theta.size - 1

    @property
    def T(self) -> float:
        return self.M * self.tau

    @property
    def times(self) -> np.ndarray:
        return self.tau * np.arange(self.M + 1)

    @property
    def midpoints(self) -> np.ndarray:
        return self.tau * (np.arange(self.M) + 0.5)

    @property
    def theta_dot(self) -> np.ndarray:
        return np.diff(self.theta) / self.tau

    @property
    def gamma_dot(self) -> np.ndarray:
        return np.diff(self.gamma) / self.tau

    def consistency_residual(self) -> np.ndarray:
        """Per-slice mismatch between ``dphi_e`` and the exact slice relation."""
        dphi = phase_increment(self.theta[:-1], self.theta[1:], np.diff(self.gamma))
        return wrap_phase(np.diff(self.phi_e) - dphi)

    def unitaries(self) -> np.ndarray:
        return euler_unitary(self.phi_e, self.theta, self.gamma)


def euler_unitary(phi_e, theta, gamma) -> np.ndarray:
    """``Rz(phi_e) Ry(theta) Rz(gamma)`` as 2x2 matrices (broadcasts)."""
    phi_e, theta, gamma = np.broadcast_arrays(
        np.asarray(phi_e, float), np.asarray(theta, float), np.asarray(gamma, float)
    )
    c, s = np.cos(theta / 2), np.sin(theta / 2)
    sp, dm = (phi_e + gamma) / 2, (phi_e - gamma) / 2
    out = np.empty(theta.shape + (2, 2), dtype=complex)
    out[..., 0, 0] = np.exp(-1j * sp) * c
    out[..., 0, 1] = -np.exp(-1j * dm) * s
    out[..., 1, 0] = np.exp(1j * dm) * s
    out[..., 1, 1] = np.exp(1j * sp) * c
    return out


def _nearest(value, ref, period):
    return value + period * np.round((ref - value) / period)


def _extract_path(a, b, theta0, s0, d0):
    """ZYZ angles along a sampled path with continuity-based branch choice.

    ``a = U[0,0] = cos(theta/2) exp(-i s/2)``, ``b = U[1,0] = sin(theta/2)
    exp(i d/2)`` with ``s = phi_e + gamma`` and ``d = phi_e - gamma``.  Where
    one of the half-angle factors vanishes the corresponding combination is
    undefined and is carried over from the previous sample.
    """
    n = a.size
    th = np.empty(n)
    s = np.empty(n)
    d = np.empty(n)
    th[0], s[0], d[0] = theta0, s0, d0
    th_p = 2.0 * np.arctan2(np.abs(b), np.abs(a))
    two_pi, four_pi = 2 * np.pi, 4 * np.pi
    for m in range(1, n):
        pt, ps, pd = th[m - 1], s[m - 1], d[m - 1]
        best = None
        k0 = np.round(pt / two_pi)
        for sign in (1.0, -1.0):
            for k in (k0 - 1, k0, k0 + 1):
                t = sign * th_p[m] + two_pi * k
                ch, sh = np.cos(t / 2), np.sin(t / 2)
                if abs(ch) > _DEGENERATE_TOL:
                    cs = _nearest(-2.0 * np.angle(a[m] * np.sign(ch)), ps, four_pi)
                else:
                    cs = ps
                if abs(sh) > _DEGENERATE_TOL:
                    cd = _nearest(2.0 * np.angle(b[m] * np.sign(sh)), pd, four_pi)
                else:
                    cd = pd
                cost = abs(t - pt) + abs(cs - ps) + abs(cd - pd)
                # prefer theta >= 0 on exact ties
                key = (round(cost, 12), 0 if t >= 0 else 1)
                if best is None or key < best[0]:
                    best = (key, t, cs, cd)
        _, th[m], s[m], d[m] = best
        _check_jump(th, s, d, m)
    return th, s, d


def _check_jump(th, s, d, m):
    lim = np.pi / 2
    if abs(th[m] - th[m - 1]) > lim:
        raise ResolutionTooCoarseError(
            f"theta jumps by {th[m] - th[m - 1]:.3f} rad at sample {m}; use more slices"
        )
    cmin = min(abs(np.cos(th[m] / 2)), abs(np.cos(th[m - 1] / 2)))
    smin = min(abs(np.sin(th[m] / 2)), abs(np.sin(th[m - 1] / 2)))
    if cmin > 0.1 and abs(s[m] - s[m - 1]) > lim:
        raise ResolutionTooCoarseError(f"phi_e + gamma jumps at sample {m}; use more slices")
    if smin > 0.1 and abs(d[m] - d[m - 1]) > lim:
        raise ResolutionTooCoarseError(f"phi_e - gamma jumps at sample {m}; use more slices")


def integrate_trajectory(pulse: ControlPulse, gamma0: float = 0.0) -> GateTrajectory:
    """Euler-angle trajectory of the ideal propagator of ``pulse``.

    The propagator is built exactly slice by slice and decomposed as
    ``Rz(phi_e) Ry(theta) Rz(gamma)``, with ``theta(0) = 0``,
    ``gamma(0) = gamma0`` and ``phi_e(0) = -gamma0``.

    Raises
    ------
    ResolutionTooCoarseError
        If an angle jumps by more than pi/2 between adjacent samples.
    """
    q = propagate_path(pulse, as_quaternion=True)
    a = q[:, 0] - 1j * q[:, 3]
    b = q[:, 2] - 1j * q[:, 1]
    th, s, d = _extract_path(a, b, 0.0, 0.0, -2.0 * gamma0)
    return GateTrajectory(th, (s + d) / 2, (s - d) / 2, pulse.tau)


# ---------------------------------------------------------------------------
# inverse engineering


def phase_increment(theta0, theta1, dgamma):
    """Exact ``phi_e`` increment that makes a slice a pure in-plane rotation."""
    tbar = 0.5 * (theta0 + theta1)
    dth = theta1 - theta0
    u = np.tan(0.5 * dgamma) * np.cos(tbar) / np.cos(0.5 * dth)
    return -2.0 * np.arctan(u)


def slice_rotations(theta0, theta1, dgamma):
    """Rotation angle and in-plane axis (relative to ``phi_e[m]``) per slice."""
    tbar = 0.5 * (theta0 + theta1)
    dth = 0.5 * (theta1 - theta0)
    cg, sg = np.cos(0.5 * dgamma), np.sin(0.5 * dgamma)
    q0 = cg * np.cos(dth)
    qx = sg * np.sin(tbar)
    qy = cg * np.sin(dth)
    qz = sg * np.cos(tbar)
    half = 0.5 * phase_increment(theta0, theta1, dgamma)
    c, s = np.cos(half), np.sin(half)
    kw = c * q0 - s * qz
    kx = c * qx - s * qy
    ky = c * qy + s * qx
    alpha = 2.0 * np.arctan2(np.hypot(kx, ky), kw)
    axis = np.arctan2(ky, kx)
    return alpha, axis


def inverse_engineer(traj: GateTrajectory, omega_max: float | None = None) -> ControlPulse:
    """Piecewise-constant pulse whose ideal evolution follows ``traj``.

    Per slice the amplitude and phase are those of the exact in-plane
    rotation linking consecutive samples; for fine slicing these tend to
    ``Omega = sqrt(theta_dot^2 + gamma_dot^2 sin^2 theta)`` and
    ``phi = phi_e + atan2(theta_dot, gamma_dot sin theta)``.  The phase of a
    zero-amplitude slice is ``phi_e``.

    Parameters
    ----------
    omega_max : float, optional
        Amplitude bound of the returned pulse.  Defaults to the largest
        slice amplitude.
    """
    alpha, axis = slice_rotations(traj.theta[:-1], traj.theta[1:], np.diff(traj.gamma))
    omega = alpha / traj.tau
    phi = traj.phi_e[:-1] + np.where(alpha > 0, axis, 0.0)
    peak = float(omega.max())
    if omega_max is None:
        omega_max = peak if peak > 0 else 1.0
    return ControlPulse(omega, phi, traj.tau, omega_max)


# ---------------------------------------------------------------------------
# toggling frame


@dataclass(frozen=True, eq=False)
class TogglingComponents:
    """Toggling-frame error operators ``E_mu(t) = sum_alpha c[mu, alpha](t) s_alpha / 2``.

    Attributes
    ----------
    amp : ndarray, shape (3, M)
        Amplitude-noise coefficients (rad/s).
    det : ndarray, shape (3, M)
        Detuning-noise coefficients (dimensionless).
    times : ndarray, shape (M,)
        Slice midpoints.
    tau : float
    """

    amp: np.ndarray
    det: np.ndarray
    times: np.ndarray
    tau: float

    def channel(self, mu: str) -> np.ndarray:
        if mu == "a":
            return self.amp
        if mu == "d":
            return self.det
        raise ValueError(f"unknown channel {mu!r}")


def toggling_closed_form(theta, gamma, theta_dot, gamma_dot):
    """Six closed-form coefficients at given angles and rates.

    Returns
    -------
    amp, det : ndarray, shape (3, ...)
    """
    st, ct = np.sin(theta), np.cos(theta)
    s2 = np.sin(2 * theta)
    sg, cg = np.sin(gamma), np.cos(gamma)
    amp = np.stack(
        [
            theta_dot * sg + 0.5 * gamma_dot * s2 * cg,
            theta_dot * cg - 0.5 * gamma_dot * s2 * sg,
            gamma_dot * st * st,
        ]
    )
    det = np.stack([-st * cg, st * sg, ct])
    return amp, det


def effective_gamma(traj: GateTrajectory) -> np.ndarray:
    """``gamma`` with gauge-free endpoint values replaced by their neighbours.

    At ``sin(theta) = 0`` only a combination of ``phi_e`` and ``gamma`` is
    defined, so the endpoint value of ``gamma`` carries no information.
    """
    g = traj.gamma.copy()
    if abs(np.sin(traj.theta[0])) < _DEGENERATE_TOL:
        g[0] = g[1]
    if abs(np.sin(traj.theta[-1])) < _DEGENERATE_TOL:
        g[-1] = g[-2]
    return g


def toggling_components(traj: GateTrajectory) -> TogglingComponents:
    """Closed-form toggling coefficients at slice midpoints."""
    g = effective_gamma(traj)
    th = traj.theta
    amp, det = toggling_closed_form(
        0.5 * (th[1:] + th[:-1]),
        0.5 * (g[1:] + g[:-1]),
        np.diff(th) / traj.tau,
        np.diff(g) / traj.tau,
    )
    return TogglingComponents(amp, det, traj.midpoints, traj.tau)
