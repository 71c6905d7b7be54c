"""
YAML run configuration with line-anchored validation.

Frequencies are given in Hz and converted to rad/s; the detuning ``rms`` is
in Hz, the amplitude ``rms`` is relative.  A minimal gate scenario::

    task: gate
    duration_tp: 6
    spectra:
      - kind: ohmic
        channel: d
        rms: 3.0e5
        params: {f_lc: 5.0e6, f_uc: 1.0e7}

Unknown keys anywhere in the tree are rejected.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml
from yaml.constructor import SafeConstructor
from yaml.nodes import MappingNode, SequenceNode

from .noise import NoiseSpectrum, make_spectrum
from .optimizer import OptimizerConfig
from .pulses import RotationSpec

__all__ = ["ConfigError", "RunConfig", "load_config", "parse_config"]

TWO_PI = 2 * np.pi
TASKS = ("gate", "state", "relaxation")
BASELINES = ("primitive", "corpse", "bb1", "cinbb")
DEFAULT_T_TP = {"gate": 6.0, "state": 5.0, "relaxation": 4.0}
# longest baseline (reduced CinBB) in units of T_P, used for the default IR cutoff
LONGEST_BASELINE_TP = 25 / 3

# config key -> library key; keys in HZ are scaled by 2pi
PARAM_KEYS = {
    "ohmic": {"f_lc": "omega_lc", "f_uc": "omega_uc"},
    "white": {"f_uv": "omega_uv"},
    "lorentzian_sum": {"peaks": "peaks", "f_uv": "omega_uv"},
    "lorentzian_pink": {
        "peaks": "peaks", "B": "B", "kappa": "kappa", "f_ir": "omega_ir", "f_uv": "omega_uv",
    },
    "gaussian_pink_white": {
        "A": "A", "f0": "omega0", "sigma": "sigma", "f_wc": "omega_wc", "B": "B",
        "kappa": "kappa", "f_ir": "omega_ir", "f_uv": "omega_uv",
    },
    "tabulated": {"f": "omega", "value": "value"},
}
HZ = {"f_lc", "f_uc", "f_uv", "f_ir", "f0", "sigma", "f_wc", "f"}
OPT_KEYS = {
    "step", "max_iter", "obj_tol", "grad_tol", "shrink", "armijo", "restarts", "init",
    "precondition", "smoothing", "momentum",
}
PROBLEM_KEYS = {"w_int", "w_amp", "w_smooth", "amp_margin"}


class ConfigError(ValueError):
    """Invalid configuration; the message is prefixed with ``file:line``."""


@dataclass
class RunConfig:
    task: str
    spectra: list
    omega_max: float
    T: float
    M: int
    seed: int
    target: RotationSpec
    optimizer: OptimizerConfig
    weights: dict
    realizations: int
    mc_method: str
    baselines: list
    pulse_source: str | None
    quasi_static: dict | None
    relaxation: dict
    sample_noise: dict
    source: str = "<string>"
    sha256: str = ""
    raw: dict = field(default_factory=dict)

    @property
    def T_P(self) -> float:
        return np.pi / self.omega_max

    def header(self) -> str:
        return f"config_sha256={self.sha256} seed={self.seed}"


class _Walker:
    def __init__(self, source: str):
        self.source = source
        self.ctor = SafeConstructor()

    def fail(self, node, msg):
        line = node.start_mark.line + 1 if node is not None else 1
        raise ConfigError(f"{self.source}:{line}: {msg}")

    def value(self, node):
        return self.ctor.construct_object(node, deep=True)

    def mapping(self, node, allowed, where):
        if not isinstance(node, MappingNode):
            self.fail(node, f"{where} must be a mapping")
        out = {}
        for k, v in node.value:
            key = self.value(k)
            if key not in allowed:
                self.fail(k, f"unknown key {key!r} in {where}; allowed: {sorted(allowed)}")
            if key in out:
                self.fail(k, f"duplicate key {key!r} in {where}")
            out[key] = (k, v)
        return out

    def number(self, node, name, lo=None, hi=None, integer=False, strict_lo=False):
        v = self.value(node)
        if isinstance(v, str):
            # YAML 1.1 reads exponents without a sign (1.0e7) as strings
            try:
                v = float(v)
            except ValueError:
                pass
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            self.fail(node, f"{name} must be a number, got {v!r}")
        if integer and not float(v).is_integer():
            self.fail(node, f"{name} must be an integer, got {v!r}")
        if not math.isfinite(v):
            self.fail(node, f"{name} must be finite")
        if lo is not None and (v < lo or (strict_lo and v == lo)):
            self.fail(node, f"{name} must be {'>' if strict_lo else '>='} {lo}, got {v!r}")
        if hi is not None and v > hi:
            self.fail(node, f"{name} must be <= {hi}, got {v!r}")
        return int(v) if integer else float(v)

    def choice(self, node, name, options):
        v = self.value(node)
        if v not in options:
            self.fail(node, f"{name} must be one of {list(options)}, got {v!r}")
        return v

    def boolean(self, node, name):
        v = self.value(node)
        if not isinstance(v, bool):
            self.fail(node, f"{name} must be true or false")
        return v

    def seq(self, node, name):
        if not isinstance(node, SequenceNode):
            self.fail(node, f"{name} must be a list")
        return node.value


def _spectrum(w: _Walker, node, idx, T_ir: float, omega_max: float) -> NoiseSpectrum:
    where = f"spectra[{idx}]"
    m = w.mapping(node, {"kind", "channel", "rms", "params"}, where)
    for req in ("kind", "channel", "rms"):
        if req not in m:
            w.fail(node, f"{where} is missing {req!r}")
    kind = w.choice(m["kind"][1], f"{where}.kind", tuple(PARAM_KEYS))
    channel = w.choice(m["channel"][1], f"{where}.channel", ("a", "d"))
    rms = w.number(m["rms"][1], f"{where}.rms", lo=0)
    if channel == "d":
        rms *= TWO_PI
    pnode = m["params"][1] if "params" in m else None
    params = {}
    if pnode is not None:
        keys = PARAM_KEYS[kind]
        for key, (kn, vn) in w.mapping(pnode, set(keys), f"{where}.params").items():
            if key == "peaks":
                peaks = []
                for j, pk in enumerate(w.seq(vn, f"{where}.params.peaks")):
                    pm = w.mapping(pk, {"A", "lam", "f0"}, f"{where}.params.peaks[{j}]")
                    if set(pm) != {"A", "lam", "f0"}:
                        w.fail(pk, "each peak needs A, lam and f0")
                    peaks.append((
                        w.number(pm["A"][1], "A", lo=0),
                        TWO_PI * w.number(pm["lam"][1], "lam", lo=0, strict_lo=True),
                        TWO_PI * w.number(pm["f0"][1], "f0", lo=0),
                    ))
                params["peaks"] = peaks
            elif kind == "tabulated":
                vals = [w.number(x, f"{where}.params.{key}") for x in w.seq(vn, key)]
                params[keys[key]] = np.asarray(vals) * (TWO_PI if key in HZ else 1.0)
            else:
                v = w.number(vn, f"{where}.params.{key}")
                params[keys[key]] = v * TWO_PI if key in HZ else v
    if kind in ("lorentzian_pink", "gaussian_pink_white") and "omega_ir" not in params:
        if params.get("B", 0.0) > 0:
            params["omega_ir"] = TWO_PI / (100 * T_ir)
    try:
        return make_spectrum(kind, params, channel, rms, omega_max)
    except (KeyError, ValueError, TypeError) as exc:
        msg = f"missing parameter {exc}" if isinstance(exc, KeyError) else str(exc)
        w.fail(node, f"{where}: {msg}")


TOP = {
    "task", "seed", "omega_max_hz", "duration_tp", "duration_s", "slices", "target",
    "spectra", "optimizer", "montecarlo", "baselines", "evaluate", "relaxation",
    "sample_noise",
}


def parse_config(text: str, source: str = "<string>") -> RunConfig:
    """Validate YAML ``text`` and build a :class:`RunConfig`."""
    w = _Walker(source)
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 1
        raise ConfigError(f"{source}:{line}: invalid YAML: {getattr(exc, 'problem', exc)}")
    if root is None:
        raise ConfigError(f"{source}:1: empty configuration")
    m = w.mapping(root, TOP, "configuration")
    if "task" not in m:
        w.fail(root, "missing required key 'task'")
    task = w.choice(m["task"][1], "task", TASKS)
    seed = w.number(m["seed"][1], "seed", lo=0, integer=True) if "seed" in m else 0
    f_max = w.number(m["omega_max_hz"][1], "omega_max_hz", lo=0, strict_lo=True) \
        if "omega_max_hz" in m else 1e7
    omega_max = TWO_PI * f_max
    T_P = np.pi / omega_max
    if "duration_tp" in m and "duration_s" in m:
        w.fail(m["duration_s"][0], "give either duration_tp or duration_s, not both")
    if "duration_s" in m:
        T = w.number(m["duration_s"][1], "duration_s", lo=0, strict_lo=True)
    else:
        tp = w.number(m["duration_tp"][1], "duration_tp", lo=1) if "duration_tp" in m \
            else DEFAULT_T_TP[task]
        T = tp * T_P
    if T < T_P * (1 - 1e-12):
        w.fail(m.get("duration_s", (root, root))[1], "duration is shorter than pi/omega_max")
    M = w.number(m["slices"][1], "slices", lo=2, integer=True) if "slices" in m else 200

    target = RotationSpec(np.pi, np.pi / 2)
    if "target" in m:
        tm = w.mapping(m["target"][1], {"angle", "axis_phase"}, "target")
        angle = w.number(tm["angle"][1], "target.angle", lo=0, strict_lo=True) \
            if "angle" in tm else np.pi
        phase = w.number(tm["axis_phase"][1], "target.axis_phase") \
            if "axis_phase" in tm else np.pi / 2
        target = RotationSpec(angle, phase)

    T_ir = max(T, LONGEST_BASELINE_TP * T_P)
    spectra = []
    if "spectra" in m:
        for i, sn in enumerate(w.seq(m["spectra"][1], "spectra")):
            spectra.append(_spectrum(w, sn, i, T_ir, omega_max))
    if task != "relaxation" and not spectra:
        w.fail(m["spectra"][1] if "spectra" in m else root,
               "at least one spectrum is required for gate and state tasks")

    opt_kw, weights = {}, {}
    if "optimizer" in m:
        om = w.mapping(m["optimizer"][1], OPT_KEYS | PROBLEM_KEYS, "optimizer")
        for key, (_, vn) in om.items():
            name = f"optimizer.{key}"
            if key in ("precondition", "momentum"):
                opt_kw[key] = w.boolean(vn, name)
            elif key == "init":
                opt_kw[key] = w.choice(vn, name, ("primitive", "smooth-random", "fourier"))
            elif key in ("max_iter", "restarts"):
                opt_kw[key] = w.number(vn, name, lo=0, integer=True)
            elif key in PROBLEM_KEYS:
                weights[key] = w.number(vn, name, lo=0)
            else:
                opt_kw[key] = w.number(vn, name, lo=0, strict_lo=key != "smoothing")
        if "shrink" in opt_kw and opt_kw["shrink"] >= 1:
            w.fail(om["shrink"][1], "optimizer.shrink must lie in (0, 1)")
    opt_kw["seed"] = seed
    if task == "relaxation":
        opt_kw.setdefault("smoothing", 20.0)
        opt_kw.setdefault("restarts", 1)
    optimizer = OptimizerConfig(**opt_kw)

    realizations, method = 150, "spectral"
    if "montecarlo" in m:
        mm = w.mapping(m["montecarlo"][1], {"realizations", "method"}, "montecarlo")
        if "realizations" in mm:
            realizations = w.number(mm["realizations"][1], "montecarlo.realizations",
                                    lo=0, integer=True)
            if realizations == 1:
                w.fail(mm["realizations"][1], "montecarlo.realizations must be 0 or >= 2")
        if "method" in mm:
            method = w.choice(mm["method"][1], "montecarlo.method", ("spectral", "circulant"))

    channels = {s.channel for s in spectra if s.scale > 0}
    if "baselines" in m:
        baselines = [w.choice(b, "baselines entry", BASELINES)
                     for b in w.seq(m["baselines"][1], "baselines")]
    elif task == "relaxation":
        baselines = ["primitive", "corpse", "bb1"]
    elif channels == {"a", "d"}:
        baselines = ["primitive", "cinbb"]
    elif channels == {"a"}:
        baselines = ["primitive", "bb1"]
    else:
        baselines = ["primitive", "corpse"]

    pulse_source, quasi = None, None
    if "evaluate" in m:
        em = w.mapping(m["evaluate"][1], {"pulse", "quasi_static"}, "evaluate")
        if "pulse" in em:
            v = w.value(em["pulse"][1])
            if not isinstance(v, str):
                w.fail(em["pulse"][1], "evaluate.pulse must be a baseline name or a file path")
            pulse_source = v
        if "quasi_static" in em:
            qm = w.mapping(em["quasi_static"][1], {"channel", "max", "points"},
                           "evaluate.quasi_static")
            ch = w.choice(qm["channel"][1], "quasi_static.channel", ("a", "d")) \
                if "channel" in qm else "d"
            mx = w.number(qm["max"][1], "quasi_static.max", lo=0, strict_lo=True) \
                if "max" in qm else (0.1 * f_max if ch == "d" else 0.1)
            pts = w.number(qm["points"][1], "quasi_static.points", lo=2, integer=True) \
                if "points" in qm else 41
            quasi = {"channel": ch, "max": mx * (TWO_PI if ch == "d" else 1.0), "points": pts}

    relax = {"gamma1": 1e3, "ratios": [10.0, 20.0, 50.0, 100.0], "M0": 1.0}
    if "relaxation" in m:
        rm = w.mapping(m["relaxation"][1], {"gamma1", "ratios", "M0"}, "relaxation")
        if "gamma1" in rm:
            relax["gamma1"] = w.number(rm["gamma1"][1], "relaxation.gamma1", lo=0)
        if "M0" in rm:
            relax["M0"] = w.number(rm["M0"][1], "relaxation.M0", lo=0)
        if "ratios" in rm:
            relax["ratios"] = [w.number(r, "relaxation.ratios entry", lo=0)
                               for r in w.seq(rm["ratios"][1], "relaxation.ratios")]
            if not relax["ratios"]:
                w.fail(rm["ratios"][1], "relaxation.ratios must not be empty")

    sn = {"realizations": 500, "samples": None, "dt": None, "keep": 4}
    if "sample_noise" in m:
        sm = w.mapping(m["sample_noise"][1], {"realizations", "samples", "dt", "keep"},
                       "sample_noise")
        if "realizations" in sm:
            sn["realizations"] = w.number(sm["realizations"][1], "sample_noise.realizations",
                                          lo=1, integer=True)
        if "samples" in sm:
            sn["samples"] = w.number(sm["samples"][1], "sample_noise.samples", lo=2,
                                     integer=True)
        if "dt" in sm:
            sn["dt"] = w.number(sm["dt"][1], "sample_noise.dt", lo=0, strict_lo=True)
        if "keep" in sm:
            sn["keep"] = w.number(sm["keep"][1], "sample_noise.keep", lo=0, integer=True)

    return RunConfig(
        task=task, spectra=spectra, omega_max=omega_max, T=T, M=M, seed=seed,
        target=target, optimizer=optimizer, weights=weights, realizations=realizations,
        mc_method=method, baselines=baselines, pulse_source=pulse_source,
        quasi_static=quasi, relaxation=relax, sample_noise=sn, source=source,
        sha256=hashlib.sha256(text.encode()).hexdigest(), raw=w.value(root),
    )


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}:1: cannot read configuration ({exc.strerror})")
    return parse_config(text, str(path))
