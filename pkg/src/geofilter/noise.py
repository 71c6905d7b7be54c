"""
Noise power spectral densities and stationary Gaussian noise synthesis.

The one-sided convention used throughout is

    <eps^2> = (1/pi) * int_0^inf S(w) dw

which equals ``(1/2pi) int_{-inf}^{inf} S`` for an even PSD.  A spectrum is
a dimensionless *shape* multiplied by a scale ``C`` fixed at construction so
that the variance equals ``rms**2``.  Shapes are written in the reduced
variable ``nu = w / freq_unit``; the unit only matters when terms with
different power laws are mixed (e.g. a Lorentzian on a 1/f background).

Supported kinds
---------------
ohmic                ``nu`` on ``[omega_lc, omega_uc]``
lorentzian_sum       ``sum_k A_k / (lam_k^2 + (nu - nu_k)^2)``
lorentzian_pink      Lorentzian sum plus ``B / nu^kappa``
gaussian_pink_white  ``A exp(-(w - w0)^2 / 2 sigma^2) + B / nu^kappa`` below
                     ``omega_wc``, constant above (left-limit value)
white                constant up to ``omega_uv``
tabulated            linear interpolation of ``(omega, value)`` pairs

Every 1/f term is held flat below ``omega_ir`` and every unbounded kind is
cut off above ``omega_uv``.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from types import MappingProxyType
from typing import Iterable

import numpy as np

from ._quadrature import Features, composite_nodes, trapezoid_weights

__all__ = [
    "KINDS",
    "NoiseSpectrum",
    "NoiseRealization",
    "SpectralAliasingError",
    "make_spectrum",
    "psd",
    "variance",
    "sample",
    "sample_ensemble",
    "estimate_psd",
]

KINDS = (
    "ohmic",
    "lorentzian_sum",
    "lorentzian_pink",
    "gaussian_pink_white",
    "white",
    "tabulated",
)
CHANNELS = ("a", "d")


class SpectralAliasingError(ValueError):
    """Sampling grid too coarse or too short for the spectrum's features."""


def _peaks(params):
    raw = params.get("peaks")
    if raw is None and "A" in params and "lam" in params:
        raw = [(params["A"], params["lam"], params["omega0"])]
    if not raw:
        raise ValueError("Lorentzian spectrum needs at least one peak")
    out = []
    for p in raw:
        if isinstance(p, dict):
            p = (p["A"], p["lam"], p["omega0"])
        A, lam, w0 = (float(v) for v in p)
        if A < 0 or lam <= 0 or w0 < 0:
            raise ValueError(f"invalid Lorentzian peak (A={A}, lam={lam}, omega0={w0})")
        out.append((A, lam, w0))
    return tuple(out)


def _normalize_params(kind: str, params: dict) -> dict:
    p = dict(params)
    pos = lambda k: float(p[k]) > 0  # noqa: E731

    if kind == "ohmic":
        lc, uc = float(p["omega_lc"]), float(p["omega_uc"])
        if not (0 <= lc < uc):
            raise ValueError(f"ohmic band needs 0 <= omega_lc < omega_uc, got {lc}, {uc}")
        return {"omega_lc": lc, "omega_uc": uc}

    if kind == "white":
        if not pos("omega_uv"):
            raise ValueError("white spectrum needs omega_uv > 0")
        return {"omega_uv": float(p["omega_uv"])}

    if kind == "tabulated":
        om = np.asarray(p["omega"], dtype=float)
        val = np.asarray(p["value"], dtype=float)
        if om.ndim != 1 or om.shape != val.shape or om.size < 2:
            raise ValueError("tabulated spectrum needs matching omega/value arrays")
        if np.any(np.diff(om) <= 0) or om[0] < 0:
            raise ValueError("tabulated omega must be non-negative and increasing")
        if np.any(val < 0):
            raise ValueError("tabulated PSD values must be non-negative")
        om.setflags(write=False)
        val.setflags(write=False)
        return {"omega": om, "value": val}

    out = {}
    centers = []
    if kind in ("lorentzian_sum", "lorentzian_pink"):
        out["peaks"] = _peaks(p)
        centers = [w0 for _, _, w0 in out["peaks"]]
    elif kind == "gaussian_pink_white":
        for k in ("A", "omega0", "sigma", "omega_wc"):
            if float(p[k]) < 0 or (k in ("sigma", "omega_wc") and not pos(k)):
                raise ValueError(f"gaussian_pink_white needs positive {k}")
            out[k] = float(p[k])
        centers = [out["omega0"], out["omega_wc"]]
    else:
        raise ValueError(f"unknown spectrum kind {kind!r}; expected one of {KINDS}")

    if kind != "lorentzian_sum":
        B = float(p.get("B", 0.0))
        kappa = float(p.get("kappa", 1.0))
        w_ir = float(p.get("omega_ir", 0.0))
        if B < 0:
            raise ValueError("B must be non-negative")
        if not (0 < kappa <= 2):
            raise ValueError(f"kappa must lie in (0, 2], got {kappa}")
        if w_ir < 0:
            raise ValueError("omega_ir must be non-negative")
        if B > 0 and kappa >= 1 and w_ir == 0:
            raise ValueError(
                f"1/f^kappa term with kappa={kappa} is not integrable at DC; set omega_ir > 0"
            )
        out.update(B=B, kappa=kappa, omega_ir=w_ir)
    default_uv = 10.0 * max(centers)
    out["omega_uv"] = float(p.get("omega_uv", default_uv))
    if out["omega_uv"] <= max(centers):
        raise ValueError("omega_uv must lie above every spectral feature")
    return out


@dataclass(frozen=True, eq=False)
class NoiseSpectrum:
    """Normalized PSD model for one noise channel.

    Attributes
    ----------
    kind : str
    params : mapping
        Kind-specific parameters in rad/s (see module docstring).
    channel : {'a', 'd'}
        Amplitude (relative, dimensionless) or detuning (rad/s) noise.
    rms : float
        Target standard deviation of ``eps``.
    scale : float
        Multiplier ``C`` applied to the shape.
    freq_unit : float
        Frequency unit of the shape variable ``nu``.
    """

    kind: str
    params: MappingProxyType
    channel: str
    rms: float
    scale: float
    freq_unit: float = 1.0

    def shape(self, omega) -> np.ndarray:
        """Unnormalized PSD shape at ``|omega|``."""
        w = np.abs(np.asarray(omega, dtype=float))
        p, u = self.params, self.freq_unit
        kind = self.kind
        if kind == "ohmic":
            return np.where((w >= p["omega_lc"]) & (w <= p["omega_uc"]), w / u, 0.0)
        if kind == "white":
            return np.where(w <= p["omega_uv"], 1.0, 0.0)
        if kind == "tabulated":
            return np.interp(w, p["omega"], p["value"], left=0.0, right=0.0)

        def smooth(x):
            s = np.zeros_like(x)
            if "peaks" in p:
                for A, lam, w0 in p["peaks"]:
                    s += A / ((lam / u) ** 2 + ((x - w0) / u) ** 2)
            else:
                s += p["A"] * np.exp(-((x - p["omega0"]) ** 2) / (2 * p["sigma"] ** 2))
            if p.get("B", 0.0) > 0:
                nu = np.maximum(x, p["omega_ir"]) / u
                with np.errstate(divide="ignore"):
                    s += p["B"] / nu ** p["kappa"]
            return s

        if kind == "gaussian_pink_white":
            wc = p["omega_wc"]
            s = np.where(w < wc, smooth(np.minimum(w, wc)), smooth(np.array([wc]))[0])
        else:
            s = smooth(w)
        return np.where(w <= p["omega_uv"], s, 0.0)

    def __call__(self, omega) -> np.ndarray:
        return self.scale * self.shape(omega)

    def features(self) -> Features:
        """Frequency structure used by quadrature grids and sampling checks."""
        p, kind = self.params, self.kind
        f = Features()
        if kind == "ohmic":
            lc, uc = p["omega_lc"], p["omega_uc"]
            f.windows.append((lc, uc))
            f.breaks.extend([b for b in (lc, uc) if b > 0])
            f.support = (lc if lc > 0 else uc * 1e-3, uc)
            f.lowest_scale = uc - lc
            f.highest = uc
            return f
        if kind == "white":
            uv = p["omega_uv"]
            f.breaks.append(uv)
            f.support = (uv * 1e-4, uv)
            f.lowest_scale = uv
            f.highest = uv
            return f
        if kind == "tabulated":
            om = p["omega"]
            f.points.extend(om.tolist())
            f.support = (om[0] if om[0] > 0 else om[1] * 1e-3, om[-1])
            f.lowest_scale = float(np.min(np.diff(om)))
            nz = om[np.asarray(p["value"]) > 0]
            f.highest = float(nz.max()) if nz.size else float(om[-1])
            return f

        lows = []
        if "peaks" in p:
            for _, lam, w0 in p["peaks"]:
                f.windows.append((w0 - 10 * lam, w0 + 10 * lam))
                f.tails.append((w0, 10 * lam, max(w0, 10 * lam)))
                f.lowest_scale = min(f.lowest_scale, lam)
                f.highest = max(f.highest, w0 + 10 * lam)
                lows.append(w0 / 100)
        else:
            A, w0, sig = p["A"], p["omega0"], p["sigma"]
            f.windows.append((w0 - 10 * sig, w0 + 10 * sig))
            f.lowest_scale = min(f.lowest_scale, sig)
            f.breaks.append(p["omega_wc"])
            f.highest = p["omega_uv"]
            lows.append(max(w0 - 10 * sig, w0 / 100, 1e-12))
        if p.get("B", 0.0) > 0:
            f.highest = p["omega_uv"]
            if p["omega_ir"] > 0:
                f.breaks.append(p["omega_ir"])
                lows.append(p["omega_ir"] / 10)
                f.lowest_scale = min(f.lowest_scale, p["omega_ir"])
            else:
                lows.append(min(lows) * 1e-4)
        f.breaks.append(p["omega_uv"])
        f.support = (min(lows), p["omega_uv"])
        return f


@dataclass(frozen=True, eq=False)
class NoiseRealization:
    """Uniformly sampled noise trace ``eps[n]`` at ``t = n * dt``."""

    samples: np.ndarray
    dt: float
    channel: str = "d"

    @property
    def times(self) -> np.ndarray:
        return self.dt * np.arange(self.samples.shape[-1])


def _shape_variance(spec: NoiseSpectrum, density: int = 4) -> float:
    f = spec.features()
    lo, hi = f.support
    # start well below the support so the DC end-cap sees the true low-frequency level
    nodes = composite_nodes(
        lo / 1000, hi, [f], per_decade=100 * density, window_nodes=500 * density,
        tail_per_decade=50 * density,
    )
    w = trapezoid_weights(nodes)
    return float(np.sum(w * spec.shape(nodes)) / np.pi)


def make_spectrum(
    kind: str,
    params: dict,
    channel: str,
    rms: float,
    freq_unit: float = 1.0,
) -> NoiseSpectrum:
    """Construct a spectrum normalized to standard deviation ``rms``.

    Raises
    ------
    ValueError
        On unknown kind/channel, invalid parameters or a 1/f^kappa term with
        ``kappa >= 1`` and no infrared cutoff.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown spectrum kind {kind!r}; expected one of {KINDS}")
    if channel not in CHANNELS:
        raise ValueError(f"channel must be 'a' or 'd', got {channel!r}")
    if not (rms >= 0):
        raise ValueError("rms must be non-negative")
    if not freq_unit > 0:
        raise ValueError("freq_unit must be positive")
    norm = MappingProxyType(_normalize_params(kind, params))
    spec = NoiseSpectrum(kind, norm, channel, float(rms), 1.0, float(freq_unit))
    if rms == 0:
        return NoiseSpectrum(kind, norm, channel, 0.0, 0.0, float(freq_unit))
    v = _shape_variance(spec)
    if not (v > 0 and np.isfinite(v)):
        raise ValueError(f"spectrum shape has non-positive or infinite variance ({v})")
    return NoiseSpectrum(kind, norm, channel, float(rms), rms**2 / v, float(freq_unit))


def psd(spectrum: NoiseSpectrum, omega) -> np.ndarray:
    """Evaluate ``S(omega)``; even in ``omega``."""
    return spectrum(omega)


def variance(spectrum: NoiseSpectrum, density: int = 4) -> float:
    """Numerically integrated ``(1/pi) int_0^inf S``."""
    return spectrum.scale * _shape_variance(spectrum, density)


def _check_sampling(spectrum: NoiseSpectrum, dt: float, n_t: int):
    f = spectrum.features()
    dw = 2 * np.pi / (dt * n_t)
    if dw > f.lowest_scale / 4:
        raise SpectralAliasingError(
            f"frequency resolution {dw:.4g} rad/s exceeds a quarter of the narrowest "
            f"feature ({f.lowest_scale:.4g} rad/s); use a longer record"
        )
    if np.pi / dt < 2 * f.highest:
        raise SpectralAliasingError(
            f"Nyquist frequency {np.pi / dt:.4g} rad/s below twice the highest "
            f"feature ({f.highest:.4g} rad/s); use a smaller dt"
        )


CELL_POINTS = 16


@lru_cache(maxsize=8)
def _cell_amplitudes(spectrum: NoiseSpectrum, dt: float, n_t: int) -> np.ndarray:
    """``N sqrt(S_k dw / 4pi)`` with ``S_k`` the PSD averaged over frequency cell ``k``.

    Cell averages (midpoint rule on ``CELL_POINTS`` sub-points) make the
    expected sample variance equal ``(1/pi) int_0^{pi/dt} S`` even when the
    PSD has hard edges inside a bin.  The DC and Nyquist cells are half width.
    """
    k = np.arange(n_t // 2 + 1)
    dw = 2 * np.pi / (dt * n_t)
    sub = (np.arange(CELL_POINTS) + 0.5) / CELL_POINTS - 0.5
    cells = np.empty(k.size)
    for i in range(0, k.size, 1 << 16):
        kk = k[i:i + (1 << 16)]
        cells[i:i + kk.size] = spectrum((kk[:, None] + sub[None, :]) * dw).mean(axis=1)
    half = (np.arange(CELL_POINTS) + 0.5) / (2 * CELL_POINTS)
    cells[0] = spectrum(half * dw).mean()
    if n_t % 2 == 0:
        cells[-1] = spectrum(np.pi / dt - half * dw).mean()
    amp = n_t * np.sqrt(cells * dw / (4 * np.pi))
    amp.setflags(write=False)
    return amp


def _synthesize(spectrum, dt, n_t, rng):
    amp = _cell_amplitudes(spectrum, float(dt), int(n_t))
    z = amp * (rng.standard_normal(amp.size) + 1j * rng.standard_normal(amp.size))
    # DC and Nyquist coefficients are real; sqrt(2) restores their variance share
    z[0] = np.sqrt(2) * z[0].real
    if n_t % 2 == 0:
        z[-1] = np.sqrt(2) * z[-1].real
    return np.fft.irfft(z, n=n_t)


def sample(
    spectrum: NoiseSpectrum, dt: float, n_t: int, seed: int, index: int = 0
) -> NoiseRealization:
    """One stationary Gaussian realization by circulant spectral synthesis.

    Each positive-frequency bin receives an independent complex Gaussian
    coefficient with ``E|Z_k|^2 = N^2 S_k dw / 2pi``, where ``S_k`` is the
    PSD averaged over the bin; DC and Nyquist get real coefficients.  The
    expected periodogram equals ``S_k`` and the expected variance equals
    ``(1/pi) int_0^{pi/dt} S``.  The random stream is
    ``SeedSequence([seed, index])``.

    Raises
    ------
    SpectralAliasingError
        If ``2pi/(dt n_t)`` exceeds a quarter of the narrowest feature or the
        Nyquist frequency is below twice the highest feature.
    """
    if dt <= 0 or n_t < 2:
        raise ValueError("need dt > 0 and at least two samples")
    _check_sampling(spectrum, dt, n_t)
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))
    return NoiseRealization(_synthesize(spectrum, dt, n_t, rng), dt, spectrum.channel)


def sample_ensemble(spectrum, dt, n_t, seed, n, start=0) -> np.ndarray:
    """Realizations ``start .. start+n-1`` stacked as shape (n, n_t)."""
    if dt <= 0 or n_t < 2:
        raise ValueError("need dt > 0 and at least two samples")
    _check_sampling(spectrum, dt, n_t)
    out = np.empty((n, n_t))
    for i in range(n):
        rng = np.random.default_rng(np.random.SeedSequence([int(seed), start + i]))
        out[i] = _synthesize(spectrum, dt, n_t, rng)
    return out


def estimate_psd(realizations: Iterable | np.ndarray, dt: float | None = None):
    """Averaged rectangular-window periodogram, one segment per realization.

    Parameters
    ----------
    realizations : sequence of NoiseRealization or ndarray, shape (R, N)
    dt : float, optional
        Required when passing a raw array.

    Returns
    -------
    omega : ndarray
        Positive bin frequencies ``2 pi k / (N dt)``, excluding DC and Nyquist.
    S_hat : ndarray
        Periodogram estimate on the one-sided convention of this module.
    """
    if isinstance(realizations, np.ndarray):
        if dt is None:
            raise ValueError("dt is required for array input")
        x = np.atleast_2d(realizations)
    else:
        reals = list(realizations)
        dt = reals[0].dt
        x = np.stack([r.samples for r in reals])
    n = x.shape[-1]
    spec = np.fft.rfft(x, axis=-1)
    pgram = np.mean(np.abs(spec) ** 2, axis=0) * dt / n
    k = np.arange(1, (n - 1) // 2 + 1)
    return 2 * np.pi * k / (n * dt), pgram[k]
