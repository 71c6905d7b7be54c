import numpy as np
import pytest
from hypothesis import settings

from geofilter.noise import make_spectrum
from geofilter.pulses import RotationSpec

settings.register_profile("default", max_examples=30, deadline=None)
settings.load_profile("default")

W = 2 * np.pi * 1e7
TP = np.pi / W
HZ = 2 * np.pi
PI_Y = RotationSpec(np.pi, np.pi / 2)


def ohmic(rms=0.03 * W, lo=0.5, hi=1.0):
    return make_spectrum("ohmic", {"omega_lc": lo * W, "omega_uc": hi * W}, "d", rms, W)


def lorentzian_pink(rms=0.03, T=9 * TP, channel="a"):
    params = {
        "peaks": [(1.0, 100 * HZ, 0.2 * W), (1.0, 100 * HZ, 0.4 * W)],
        "B": 0.05,
        "kappa": 1.0,
        "omega_ir": 2 * np.pi / (100 * T),
    }
    return make_spectrum("lorentzian_pink", params, channel, rms, W)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


ACCEPTANCE = {}


@pytest.fixture
def verdict():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def record(n, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {n}: {detail}"
        ACCEPTANCE[n] = line
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
