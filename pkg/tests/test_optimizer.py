import numpy as np
import pytest

from geofilter.filterfn import pulse_infidelity
from geofilter.optimizer import (
    OptimizationProblem,
    OptimizerConfig,
    build_objective,
    initialize,
    report_infidelity,
    run,
)
from geofilter.pulses import ControlPulse, RotationSpec, load_pulse, primitive, save_pulse
from geofilter.su2 import gate_fidelity, integrate_trajectory, propagate

from conftest import PI_Y, TP, W, lorentzian_pink, ohmic

FAST = OptimizerConfig(restarts=0, max_iter=400)


def gate_problem(rms=0.03 * W, M=60, T=6 * TP, **kw):
    return OptimizationProblem("gate", [ohmic(rms)], T, M, W, PI_Y, **kw)


def central_gradient(f, x, h):
    g = np.empty_like(x)
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        # Richardson extrapolation of two central differences
        d1 = (f(x + e) - f(x - e)) / (2 * h)
        d2 = (f(x + 2 * e) - f(x - 2 * e)) / (4 * h)
        g[i] = (4 * d1 - d2) / 3
    return g


@pytest.mark.parametrize(
    "problem",
    [
        gate_problem(M=24, w_smooth=1e-2),
        OptimizationProblem("state", [ohmic()], 5 * TP, 24, W),
        OptimizationProblem("gate", [lorentzian_pink(T=9 * TP)], 9 * TP, 24, W, PI_Y),
        OptimizationProblem("gate", [ohmic(), lorentzian_pink(T=9 * TP)], 9 * TP, 24, W,
                            RotationSpec(np.pi, 0.3)),
    ],
    ids=["gate", "state", "lorentzian", "both-channels"],
)
def test_gradient_matches_finite_differences(problem):
    obj = build_objective(problem)
    x = initialize(problem, "smooth-random", seed=5)
    f, g = obj.evaluate(x)
    num = central_gradient(lambda z: obj.evaluate(z)[0], x, 1e-4)
    assert np.linalg.norm(g - num) <= 1e-5 * np.linalg.norm(num)


def test_amplitude_penalty_gradient():
    # squeeze T so that the primitive ramp violates the bound
    p = gate_problem(M=20, T=1.02 * TP, w_int=0.0)
    obj = build_objective(p)
    x = initialize(p, "smooth-random", seed=2, amplitude=0.5)
    assert np.max(obj.amplitude(x)) > W
    _, g, parts = obj.evaluate(x, parts=True)
    assert parts["penalty"] > 0
    num = central_gradient(lambda z: obj.evaluate(z)[0], x, 1e-5)
    assert np.linalg.norm(g - num) <= 1e-5 * np.linalg.norm(num)


def test_amplitude_penalty_inactive_below_bound():
    p = gate_problem(M=20, w_int=0.0)
    obj = build_objective(p)
    x = initialize(p)
    assert np.max(obj.amplitude(x)) < 0.5 * W
    assert obj.evaluate(x, parts=True)[2]["penalty"] == 0.0


def test_primitive_initialization():
    p = gate_problem()
    obj = build_objective(p)
    x = initialize(p)
    assert abs(obj.residual(x)) < 1e-12
    assert np.allclose(obj.amplitude(x), np.pi / p.T)
    stretched = ControlPulse(np.full(p.M, np.pi / p.T), np.full(p.M, np.pi / 2), p.tau, W)
    core = obj.evaluate(x, parts=True)[2]["core"]
    assert core == pytest.approx(pulse_infidelity(stretched, p.spectra), rel=1e-2)


def test_objective_quadratic_in_noise():
    a, b = gate_problem(0.01 * W), gate_problem(0.02 * W)
    x = initialize(a, "smooth-random", seed=1)
    ca = build_objective(a).evaluate(x, parts=True)[2]["core"]
    cb = build_objective(b).evaluate(x, parts=True)[2]["core"]
    assert cb == pytest.approx(4 * ca, rel=1e-10)


def test_fourier_initialization_bound():
    p = gate_problem(M=200)
    obj = build_objective(p)
    for seed in range(10):
        x = initialize(p, "fourier", seed=seed)
        assert np.max(obj.amplitude(x)) <= 2 * np.pi / p.T * (1 + 1e-9)


def test_unknown_initialization():
    with pytest.raises(ValueError):
        initialize(gate_problem(), "nope")


@pytest.mark.parametrize(
    "kw",
    [dict(task="spin"), dict(M=1), dict(T=0.5 * TP), dict(w_int=-1.0),
     dict(target=RotationSpec(np.pi / 2, 0.0))],
)
def test_problem_validation(kw):
    base = dict(task="gate", spectra=[ohmic()], T=6 * TP, M=50, omega_max=W, target=PI_Y)
    base.update(kw)
    with pytest.raises(ValueError):
        OptimizationProblem(**base)


def test_config_validation():
    with pytest.raises(ValueError):
        OptimizerConfig(step=0)
    with pytest.raises(ValueError):
        OptimizerConfig(shrink=1.5)


def test_zero_noise_problem():
    rep = run(gate_problem(0.0), FAST)
    assert rep.feasible and rep.ff_objective == 0.0


@pytest.fixture(scope="module")
def gate_report():
    p = gate_problem(M=100)
    return p, run(p, OptimizerConfig(restarts=1, max_iter=600))


def test_run_improves_and_is_feasible(gate_report):
    p, rep = gate_report
    assert rep.feasible
    assert rep.residuals["boundary"] < 1e-6
    assert np.all(np.diff(rep.trace) <= 0)
    assert rep.ff_objective < 0.5 * pulse_infidelity(primitive(PI_Y, W), p.spectra)
    assert rep.pulse.omega.max() <= W * (1 + 1e-9)


def test_report_pulse_reaches_target(gate_report):
    p, rep = gate_report
    assert gate_fidelity(p.target.unitary(), propagate(rep.pulse)) > 1 - 1e-10
    assert rep.pulse.T == pytest.approx(p.T, rel=1e-12)


def test_report_objective_matches_pulse(gate_report):
    p, rep = gate_report
    assert report_infidelity(rep, p) == pytest.approx(rep.ff_objective, rel=1e-2)


def test_report_trajectory_roundtrip(gate_report, tmp_path):
    p, rep = gate_report
    path = tmp_path / "pulse.csv"
    save_pulse(rep.pulse, path)
    back = integrate_trajectory(load_pulse(path), gamma0=rep.trajectory.gamma[0])
    assert np.allclose(back.theta, rep.trajectory.theta, atol=1e-8)


def test_seeded_runs_reproducible():
    p = gate_problem(M=40)
    cfg = OptimizerConfig(restarts=1, max_iter=100, seed=3)
    a, b = run(p, cfg), run(p, cfg)
    assert a.objective == b.objective
    assert np.array_equal(a.pulse.omega, b.pulse.omega)


def test_state_run_transfers_population():
    p = OptimizationProblem("state", [ohmic()], 5 * TP, 80, W)
    rep = run(p, FAST)
    U = propagate(rep.pulse)
    assert rep.feasible and abs(U[1, 0]) ** 2 > 1 - 1e-10
    assert rep.ff_objective < pulse_infidelity(primitive(PI_Y, W), p.spectra, "state")
