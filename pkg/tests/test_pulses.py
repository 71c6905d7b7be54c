import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.linalg import expm

from geofilter.pulses import (
    ControlPulse,
    RotationSpec,
    bb1,
    corpse,
    load_pulse,
    primitive,
    reduced_cinbb,
    resample,
    save_pulse,
)
from geofilter.su2 import SX, SY, gate_fidelity, propagate

from conftest import PI_Y, TP, W


def exact_segments(segments):
    """Product of matrix exponentials, one per segment."""
    U = np.eye(2, dtype=complex)
    for angle, phase in segments:
        H = angle * (np.cos(phase) * SX + np.sin(phase) * SY) / 2
        U = expm(-1j * H) @ U
    return U


def test_primitive_duration():
    assert primitive(PI_Y, W).T == pytest.approx(5e-8, rel=1e-14)
    assert primitive(RotationSpec(np.pi / 2, 0.0), W).T == pytest.approx(2.5e-8, rel=1e-14)


def test_full_rotation_is_minus_identity():
    U = propagate(primitive(RotationSpec(2 * np.pi, 0.0), W))
    assert np.allclose(U, -np.eye(2), atol=1e-12)


@pytest.mark.parametrize("bad", [0.0, -1.0])
def test_primitive_rejects_bad_bound(bad):
    with pytest.raises(ValueError):
        primitive(PI_Y, bad)
    with pytest.raises(ValueError):
        primitive(PI_Y, W, M=0)


@pytest.mark.parametrize(
    "build, length",
    [(primitive, 1.0), (corpse, 13 / 3), (bb1, 5.0), (reduced_cinbb, 25 / 3)],
)
def test_baseline_lengths_and_targets(build, length):
    p = build(PI_Y, W)
    assert p.T / TP == pytest.approx(length, rel=1e-12)
    assert np.max(p.omega) <= p.omega_max
    assert gate_fidelity(PI_Y.unitary(), propagate(p)) >= 1 - 1e-10


def test_baseline_lengths_round_to_table_values():
    got = [round(b(PI_Y, W).T / TP, 1) for b in (primitive, corpse, bb1, reduced_cinbb)]
    assert got == [1.0, 4.3, 5.0, 8.3]


def test_corpse_segment_angles():
    p = corpse(PI_Y, W)
    # one slice is T_P / 3; segments are 7, 5 and 1 slices
    assert p.M == 13
    assert p.tau == pytest.approx(TP / 3)
    ph = p.phi
    assert np.allclose(ph[:7], np.pi / 2) and np.allclose(ph[7:12], -np.pi / 2)
    assert np.allclose(ph[12:], np.pi / 2)


def test_target_is_pi_about_y():
    assert np.allclose(PI_Y.unitary(), -1j * SY, atol=1e-15)


def test_corpse_cancels_first_order_detuning():
    from geofilter.montecarlo import quasi_static_infidelity

    d = np.linspace(-0.05, 0.05, 21)[1:] * W
    d = d[d != 0]
    inf = quasi_static_infidelity(corpse(PI_Y, W), PI_Y.unitary(), d, "d")
    slope = np.polyfit(np.log(np.abs(d)), np.log(inf), 1)[0]
    assert slope >= 4 - 0.2


def test_bb1_amplitude_robustness():
    from geofilter.montecarlo import quasi_static_infidelity

    prim = quasi_static_infidelity(primitive(PI_Y, W), PI_Y.unitary(), [0.05], "a")[0]
    comp = quasi_static_infidelity(bb1(PI_Y, W), PI_Y.unitary(), [0.05], "a")[0]
    assert comp * 10 <= prim


def test_cinbb_both_errors():
    p, c = primitive(PI_Y, W), reduced_cinbb(PI_Y, W)
    errs = dict(amplitude=np.full(c.M, 0.02), detuning=np.full(c.M, 0.02 * W))
    fc = gate_fidelity(PI_Y.unitary(), propagate(c, **errs))
    fp = gate_fidelity(
        PI_Y.unitary(), propagate(p, amplitude=[0.02], detuning=[0.02 * W])
    )
    assert 1 - fc < 1 - fp


def test_resample_integer_multiple_is_exact():
    p = primitive(PI_Y, W, M=3)
    q = resample(p, 6)
    assert np.array_equal(q.omega, np.repeat(p.omega, 2))
    assert q.T == pytest.approx(p.T)
    back = resample(q, 3)
    assert np.allclose(back.omega, p.omega) and np.allclose(back.phi, p.phi)


def test_resample_corpse_keeps_gate():
    from geofilter.pulses import corpse_segments

    exact = exact_segments(corpse_segments(PI_Y))
    p = resample(corpse(PI_Y, W), 1000)
    assert gate_fidelity(exact, propagate(p)) >= 1 - 1e-6


@given(st.integers(1, 40), st.integers(1, 300))
def test_resample_preserves_duration_and_bound(m0, m1):
    rng = np.random.default_rng(m0 * 1000 + m1)
    p = ControlPulse(rng.uniform(0, W, m0), rng.uniform(-np.pi, np.pi, m0), TP / m0, W)
    q = resample(p, m1)
    assert q.M == m1
    assert q.T == pytest.approx(p.T, rel=1e-12)
    assert np.all(q.omega <= W)


def test_pulse_validation():
    with pytest.raises(ValueError):
        ControlPulse([2 * W], [0.0], TP, W)
    with pytest.raises(ValueError):
        ControlPulse([W], [0.0, 1.0], TP, W)
    with pytest.raises(ValueError):
        ControlPulse([W], [0.0], -TP, W)
    p = ControlPulse([W], [3 * np.pi / 2], TP, W)
    assert p.phi[0] == pytest.approx(-np.pi / 2)


def test_save_load_round_trip(tmp_path, rng):
    p = ControlPulse(rng.uniform(0, W, 17), rng.uniform(-np.pi, np.pi, 17), TP / 7, W)
    path = tmp_path / "p.csv"
    save_pulse(p, path, header="config_sha256=abc seed=1")
    text = path.read_text().splitlines()
    assert text[0] == "# config_sha256=abc seed=1"
    assert text[1] == "t_start,omega_rad_s,phi_rad"
    meta = json.loads(path.with_suffix(".json").read_text())
    assert meta["M"] == 17 and meta["tau"] == pytest.approx(TP / 7)
    q = load_pulse(path)
    assert np.allclose(q.omega, p.omega, rtol=1e-15, atol=0)
    assert np.allclose(q.phi, p.phi, rtol=1e-15, atol=1e-15)


def test_load_rejects_wrong_header(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError):
        load_pulse(path)
