import json
import subprocess
import sys
import textwrap

import numpy as np
import pytest

from geofilter.cli import main
from geofilter.config import ConfigError, parse_config

GATE = """\
task: gate
seed: 5
duration_tp: 6
slices: 60
spectra:
  - kind: ohmic
    channel: d
    rms: 3.0e5
    params: {f_lc: 5.0e6, f_uc: 1.0e7}
optimizer: {restarts: 0, max_iter: 300}
montecarlo: {realizations: 32}
evaluate:
  pulse: corpse
  quasi_static: {channel: d, max: 1.0e6, points: 5}
"""


def write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(textwrap.dedent(text))
    return path


def run_cli(*argv):
    return main([str(a) for a in argv])


def read_csv(path):
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# config_sha256=")
    cols = lines[1].split(",")
    return cols, [dict(zip(cols, ln.split(","))) for ln in lines[2:]]


def test_parse_defaults():
    cfg = parse_config(GATE, "x.yaml")
    assert cfg.task == "gate" and cfg.M == 60 and cfg.seed == 5
    assert cfg.T == pytest.approx(6 * cfg.T_P)
    assert cfg.spectra[0].rms == pytest.approx(2 * np.pi * 3e5)
    assert cfg.baselines == ["primitive", "corpse"]
    assert cfg.header().startswith("config_sha256=")


@pytest.mark.parametrize(
    "text, line",
    [
        (GATE.replace("slices: 60", "slicez: 60"), 4),
        (GATE.replace("    rms: 3.0e5", "    rms: -1"), 8),
        (GATE.replace("task: gate", "task: nonsense"), 1),
        (GATE + "seed: 3\n", 15),
    ],
    ids=["unknown-key", "negative-rms", "bad-task", "duplicate"],
)
def test_config_errors_carry_line(text, line):
    with pytest.raises(ConfigError, match=rf"x\.yaml:{line}:"):
        parse_config(text, "x.yaml")


def test_gate_needs_spectra():
    text = "task: gate\nseed: 1\n"
    with pytest.raises(ConfigError, match="spectr"):
        parse_config(text, "x.yaml")


def test_config_error_exit_code(tmp_path, capsys):
    cfg = write(tmp_path, GATE.replace("slices: 60", "slicez: 60"))
    assert run_cli("optimize", "--config", cfg, "--out", tmp_path / "o") == 2
    assert "run.yaml:4:" in capsys.readouterr().err


def test_missing_config(tmp_path):
    assert run_cli("evaluate", "--config", tmp_path / "absent.yaml", "--out", tmp_path) == 2


def test_bad_threads(tmp_path):
    cfg = write(tmp_path, GATE)
    assert run_cli("evaluate", "--config", cfg, "--out", tmp_path / "o", "--threads", "0") == 2


def test_evaluate_corpse(tmp_path):
    cfg = write(tmp_path, GATE)
    out = tmp_path / "o"
    assert run_cli("evaluate", "--config", cfg, "--out", out) == 0
    rep = json.loads((out / "evaluate.json").read_text())
    assert rep["pulse"] == "corpse"
    assert rep["length_tp"] == pytest.approx(13 / 3)
    assert 6e-3 < rep["ff_infidelity"] < 1.2e-2
    assert rep["header"].startswith("config_sha256=")
    cols, rows = read_csv(out / "quasi_static.csv")
    assert cols == ["epsilon", "infidelity"] and len(rows) == 5
    cols, _ = read_csv(out / "ff_d.csv")
    assert cols == ["omega_rad_s", "ff_value", "ff_raw"]


def test_optimize_outputs_and_determinism(tmp_path):
    cfg = write(tmp_path, GATE)
    a, b = tmp_path / "a", tmp_path / "b"
    assert run_cli("optimize", "--config", cfg, "--out", a) == 0
    assert run_cli("optimize", "--config", cfg, "--out", b, "--threads", 2) == 0
    for name in ("pulse.csv", "trajectory.csv", "report.json", "ff_d.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    rep = json.loads((a / "report.json").read_text())
    assert rep["feasible"] and rep["residuals"]["boundary"] < 1e-6
    assert rep["ff_infidelity"] < 1.075e-3
    cols, rows = read_csv(a / "trajectory.csv")
    assert cols == ["t_s", "theta_rad", "phi_e_rad", "gamma_rad"] and len(rows) == 61


def test_seed_override(tmp_path):
    cfg = write(tmp_path, GATE)
    assert run_cli("evaluate", "--config", cfg, "--out", tmp_path / "o", "--seed", 99) == 0
    assert "seed=99" in (tmp_path / "o" / "evaluate.json").read_text()


def test_evaluate_pulse_file(tmp_path):
    from geofilter.pulses import corpse, RotationSpec, save_pulse

    save_pulse(corpse(RotationSpec(np.pi, np.pi / 2), 2 * np.pi * 1e7), tmp_path / "p.csv")
    cfg = write(tmp_path, GATE.replace("pulse: corpse", "pulse: p.csv"))
    assert run_cli("evaluate", "--config", cfg, "--out", tmp_path / "o") == 0
    cfg = write(tmp_path, GATE.replace("pulse: corpse", "pulse: nope.csv"))
    assert run_cli("evaluate", "--config", cfg, "--out", tmp_path / "o") == 2


def test_sample_noise(tmp_path):
    cfg = write(tmp_path, GATE + "sample_noise: {realizations: 20}\n")
    out = tmp_path / "o"
    assert run_cli("sample-noise", "--config", cfg, "--out", out) == 0
    rep = json.loads((out / "sample_noise.json").read_text())["spectra"][0]
    assert rep["variance_estimate"] == pytest.approx(rep["variance_target"], rel=0.05)
    cols, rows = read_csv(out / "noise_0_psd.csv")
    assert cols == ["omega_rad_s", "psd_estimate", "psd_target"] and rows
    assert (out / "noise_0_realizations.csv").exists()


def test_aliasing_exit_code(tmp_path):
    text = GATE.replace("params: {f_lc: 5.0e6, f_uc: 1.0e7}", "params: {f_lc: 5.0e6, f_uc: 1.0e12}")
    cfg = write(tmp_path, text)
    assert run_cli("evaluate", "--config", cfg, "--out", tmp_path / "o") == 4


def test_compare_gate(tmp_path):
    cfg = write(tmp_path, GATE)
    out = tmp_path / "o"
    assert run_cli("compare", "--config", cfg, "--out", out) == 0
    cols, rows = read_csv(out / "compare.csv")
    assert cols == ["pulse", "length_tp", "ff_infidelity", "mc_infidelity", "mc_se"]
    assert [r["pulse"] for r in rows] == ["primitive", "corpse", "roc"]
    ff = {r["pulse"]: float(r["ff_infidelity"]) for r in rows}
    assert ff["roc"] < ff["primitive"] < ff["corpse"]


def test_compare_relaxation(tmp_path):
    cfg = write(tmp_path, """\
    task: relaxation
    seed: 0
    slices: 60
    optimizer: {max_iter: 200, restarts: 0}
    relaxation: {gamma1: 1.0e3, ratios: [10, 30, 100]}
    """)
    out = tmp_path / "o"
    assert run_cli("compare", "--config", cfg, "--out", out, "--threads", 3) == 0
    cols, rows = read_csv(out / "relaxation_sweep.csv")
    assert cols[0] == "gamma2_over_gamma1" and cols[-1] == "distance_roc"
    prim = [float(r["distance_primitive"]) for r in rows]
    assert prim == sorted(prim)


def test_module_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "geofilter", "--help"], capture_output=True,
                         text=True)
    assert res.returncode == 0
    for cmd in ("optimize", "evaluate", "sample-noise", "compare"):
        assert cmd in res.stdout
