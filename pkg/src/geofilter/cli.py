"""
Command line front end.

    geofilter optimize     --config run.yaml --out results/
    geofilter evaluate     --config run.yaml --out results/
    geofilter sample-noise --config run.yaml --out results/
    geofilter compare      --config run.yaml --out results/ --threads 4

Every CSV starts with ``# config_sha256=... seed=...``; JSON reports carry
the same string under ``"header"``.  Exit codes: 0 success, 2 configuration
error, 3 infeasible optimization, 4 numerical precondition failure.
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path

import numpy as np

from .bloch import (
    RelaxationModel,
    RelaxationProblem,
    relaxation_sweep,
    run_relaxation,
    transfer_distance,
)
from .config import ConfigError, RunConfig, load_config
from .filterfn import build_grid, fine_trajectory, fragments, avg_infidelity, save_filter_function
from .montecarlo import mc_gate_infidelity, mc_state_infidelity, quasi_static_infidelity
from .noise import SpectralAliasingError, estimate_psd, sample
from .optimizer import OptimizationProblem, run
from .pulses import bb1, corpse, load_pulse, primitive, reduced_cinbb, save_pulse
from .su2 import ResolutionTooCoarseError

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_PRECONDITION = 0, 2, 3, 4
MAX_NOISE_SAMPLES = 1 << 22
PSD_ROWS = 2000

BUILDERS = {"primitive": primitive, "corpse": corpse, "bb1": bb1, "cinbb": reduced_cinbb}


class Infeasible(Exception):
    pass


# ---------------------------------------------------------------------------
# output helpers


def _write_csv(path: Path, header: str, columns: list[str], rows) -> None:
    lines = [f"# {header}", ",".join(columns)]
    lines += [",".join(_fmt(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def _fmt(v) -> str:
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def _write_json(path: Path, header: str, payload: dict) -> None:
    doc = {"header": header, **payload}
    path.write_text(json.dumps(_plain(doc), indent=2, sort_keys=True) + "\n")


def _plain(obj):
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (np.floating, float)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _write_trajectory(path: Path, header: str, traj) -> None:
    rows = zip(traj.times.tolist(), traj.theta.tolist(), traj.phi_e.tolist(),
               traj.gamma.tolist())
    _write_csv(path, header, ["t_s", "theta_rad", "phi_e_rad", "gamma_rad"], rows)


def _write_ff(out: Path, header: str, ffs, spectra) -> None:
    for mu in ("a", "d"):
        save_filter_function(ffs, mu, out / f"ff_{mu}.csv", header)


def _mc(cfg: RunConfig, pulse, threads: int):
    if cfg.realizations < 2 or not any(s.scale > 0 for s in cfg.spectra):
        return None
    if cfg.task == "gate":
        res = mc_gate_infidelity(pulse, cfg.target.unitary(), cfg.spectra, cfg.realizations,
                                 cfg.seed, threads=threads, method=cfg.mc_method)
    else:
        res = mc_state_infidelity(pulse, cfg.spectra, cfg.realizations, cfg.seed,
                                  threads=threads, method=cfg.mc_method)
    return res.to_dict()


def _baseline(name: str, cfg: RunConfig):
    return BUILDERS[name](cfg.target, cfg.omega_max)


def _problem(cfg: RunConfig) -> OptimizationProblem:
    return OptimizationProblem(cfg.task, cfg.spectra, cfg.T, cfg.M, cfg.omega_max, cfg.target,
                               **cfg.weights)


def _relax_problem(cfg: RunConfig, ratio: float) -> RelaxationProblem:
    r = cfg.relaxation
    model = RelaxationModel(r["gamma1"], r["gamma1"] * ratio, r["M0"])
    return RelaxationProblem(model, cfg.T, cfg.M, cfg.omega_max, **cfg.weights)


def _ff_prediction(cfg: RunConfig, pulse):
    traj = fine_trajectory(pulse)
    grid = build_grid(cfg.spectra, pulse.T, cfg.omega_max)
    ffs = fragments(traj, grid, cfg.task, cfg.omega_max)
    return ffs, avg_infidelity(ffs, cfg.spectra)


# ---------------------------------------------------------------------------
# commands


def cmd_optimize(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    h = cfg.header()
    if cfg.task == "relaxation":
        ratio = cfg.relaxation["ratios"][0]
        prob = _relax_problem(cfg, ratio)
        rep = run_relaxation(prob, cfg.optimizer)
        prim = transfer_distance(primitive(cfg.target, cfg.omega_max), prob.model)
        extra = {"gamma1": prob.model.gamma1, "gamma2": prob.model.gamma2,
                 "distance_primitive": prim}
    else:
        prob = _problem(cfg)
        rep = run(prob, cfg.optimizer)
        _write_ff(out, h, rep.fragments, cfg.spectra)
        _, pred = _ff_prediction(cfg, rep.pulse)
        extra = {"ff_infidelity": pred, "montecarlo": _mc(cfg, rep.pulse, threads)}
    save_pulse(rep.pulse, out / "pulse.csv", h)
    _write_trajectory(out / "trajectory.csv", h, rep.trajectory)
    _write_json(out / "report.json", h, {
        "task": cfg.task, "T_s": cfg.T, "T_tp": cfg.T / cfg.T_P, "M": cfg.M,
        "objective": rep.objective, "ff_objective": rep.ff_objective,
        "residuals": rep.residuals, "feasible": rep.feasible, "iterations": rep.iterations,
        "init": rep.init, "trace": rep.trace, **extra,
    })
    if not rep.feasible:
        raise Infeasible(f"optimization ended infeasible (residuals {rep.residuals})")
    return EXIT_OK


def _load_eval_pulse(cfg: RunConfig):
    src = cfg.pulse_source or "primitive"
    if src in BUILDERS:
        return src, _baseline(src, cfg)
    path = Path(src)
    if not path.is_absolute():
        path = Path(cfg.source).parent / path
    try:
        return src, load_pulse(path)
    except (OSError, ValueError) as exc:
        raise ConfigError(f"{cfg.source}:1: cannot load pulse {src!r}: {exc}")


def cmd_evaluate(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    h = cfg.header()
    name, pulse = _load_eval_pulse(cfg)
    payload = {"task": cfg.task, "pulse": name, "length_tp": pulse.T / cfg.T_P, "M": pulse.M}
    if cfg.task == "relaxation":
        r = cfg.relaxation
        payload["distances"] = [
            {"gamma2_over_gamma1": ratio,
             "distance": transfer_distance(
                 pulse, RelaxationModel(r["gamma1"], r["gamma1"] * ratio, r["M0"]))}
            for ratio in r["ratios"]
        ]
    else:
        ffs, pred = _ff_prediction(cfg, pulse)
        _write_ff(out, h, ffs, cfg.spectra)
        payload["ff_infidelity"] = pred
        payload["montecarlo"] = _mc(cfg, pulse, threads)
    if cfg.quasi_static:
        q = cfg.quasi_static
        eps = np.linspace(-q["max"], q["max"], q["points"])
        inf = quasi_static_infidelity(pulse, cfg.target.unitary(), eps, q["channel"])
        _write_csv(out / "quasi_static.csv", h, ["epsilon", "infidelity"],
                   zip(eps.tolist(), inf.tolist()))
        payload["quasi_static"] = {"channel": q["channel"], "max": q["max"],
                                   "points": q["points"]}
    _write_json(out / "evaluate.json", h, payload)
    return EXIT_OK


def _noise_grid(spec, cfg: RunConfig):
    f = spec.features()
    dt = cfg.sample_noise["dt"] or np.pi / (4 * f.highest)
    n = cfg.sample_noise["samples"]
    if n is None:
        need = max(1024, int(np.ceil(2 * np.pi / (dt * f.lowest_scale / 4))))
        n = 1 << int(np.ceil(np.log2(need)))
        if n > MAX_NOISE_SAMPLES:
            raise SpectralAliasingError(
                f"resolving {spec.kind} needs {n} samples per realization "
                f"(limit {MAX_NOISE_SAMPLES}); set sample_noise.dt and samples explicitly"
            )
    return dt, n


def cmd_sample_noise(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    h = cfg.header()
    if not cfg.spectra:
        raise ConfigError(f"{cfg.source}:1: sample-noise needs at least one spectrum")
    sn = cfg.sample_noise
    summary = []
    for k, spec in enumerate(cfg.spectra):
        dt, n = _noise_grid(spec, cfg)
        R = sn["realizations"]

        def one(i):
            r = sample(spec, dt, n, cfg.seed, index=i)
            w, p = estimate_psd(r.samples[None, :], dt)
            return i, r.samples, p, w

        acc, var, kept, omega = 0.0, 0.0, [], None
        with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
            for i, x, p, w in ex.map(one, range(R)):
                acc = acc + p
                var += float(np.mean(x**2))
                omega = w
                if i < sn["keep"]:
                    kept.append(x[: min(n, 4096)])
        est = acc / R
        target = spec(omega)
        g = max(1, omega.size // PSD_ROWS)
        m = (omega.size // g) * g
        rows = zip(omega[:m].reshape(-1, g).mean(1).tolist(),
                   est[:m].reshape(-1, g).mean(1).tolist(),
                   target[:m].reshape(-1, g).mean(1).tolist())
        _write_csv(out / f"noise_{k}_psd.csv", h, ["omega_rad_s", "psd_estimate", "psd_target"],
                   rows)
        if kept:
            t = dt * np.arange(kept[0].size)
            cols = ["t_s"] + [f"r{i}" for i in range(len(kept))]
            _write_csv(out / f"noise_{k}_realizations.csv", h, cols,
                       zip(t.tolist(), *[x.tolist() for x in kept]))
        summary.append({
            "index": k, "kind": spec.kind, "channel": spec.channel, "rms": spec.rms,
            "dt_s": dt, "samples": n, "realizations": R,
            "variance_target": spec.rms**2, "variance_estimate": var / R,
        })
    _write_json(out / "sample_noise.json", h, {"spectra": summary})
    return EXIT_OK


def cmd_compare(cfg: RunConfig, out: Path, threads: int = 1) -> int:
    h = cfg.header()
    if cfg.task == "relaxation":
        r = cfg.relaxation

        def point(ratio):
            return relaxation_sweep([ratio], r["gamma1"], cfg.omega_max, cfg.T, cfg.M,
                                    cfg.optimizer, r["M0"])[0]

        with ThreadPoolExecutor(max_workers=max(1, threads)) as ex:
            rows = list(ex.map(point, r["ratios"]))
        cols = ["gamma2_over_gamma1", "distance_primitive", "distance_corpse", "distance_bb1",
                "distance_roc"]
        _write_csv(out / "relaxation_sweep.csv", h, cols, ([row[c] for c in cols] for row in rows))
        _write_json(out / "compare.json", h, {"task": cfg.task, "T_s": cfg.T, "rows": rows})
        return EXIT_OK

    rows = []
    for name in cfg.baselines:
        pulse = _baseline(name, cfg)
        _, pred = _ff_prediction(cfg, pulse)
        rows.append((name, pulse, pred))
    rep = run(_problem(cfg), cfg.optimizer)
    _, pred = _ff_prediction(cfg, rep.pulse)
    rows.append(("roc", rep.pulse, pred))
    table = []
    for name, pulse, pred in rows:
        mc = _mc(cfg, pulse, threads)
        table.append({
            "pulse": name, "length_tp": pulse.T / cfg.T_P, "ff_infidelity": pred,
            "mc_infidelity": mc["mean"] if mc else float("nan"),
            "mc_se": mc["se"] if mc else float("nan"),
        })
    cols = ["pulse", "length_tp", "ff_infidelity", "mc_infidelity", "mc_se"]
    _write_csv(out / "compare.csv", h, cols, ([row[c] for c in cols] for row in table))
    save_pulse(rep.pulse, out / "roc_pulse.csv", h)
    _write_json(out / "compare.json", h, {
        "task": cfg.task, "T_s": cfg.T, "rows": table, "roc_feasible": rep.feasible,
        "roc_residuals": rep.residuals, "roc_objective": rep.objective,
    })
    if not rep.feasible:
        raise Infeasible("ROC optimization ended infeasible")
    return EXIT_OK


COMMANDS = {
    "optimize": cmd_optimize,
    "evaluate": cmd_evaluate,
    "sample-noise": cmd_sample_noise,
    "compare": cmd_compare,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="geofilter", description=__doc__.split("\n\n")[0].strip())
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="YAML run configuration")
        p.add_argument("--out", default="out", help="output directory (default: out)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1, help="worker threads (default: 1)")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be non-negative")
            cfg = replace(cfg, seed=args.seed, optimizer=replace(cfg.optimizer, seed=args.seed))
        if args.threads < 1:
            raise ConfigError("--threads must be at least 1")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args.threads)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Infeasible as exc:
        print(f"infeasible: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except (SpectralAliasingError, ResolutionTooCoarseError) as exc:
        print(f"precondition failed: {exc}", file=sys.stderr)
        return EXIT_PRECONDITION


if __name__ == "__main__":
    sys.exit(main())
