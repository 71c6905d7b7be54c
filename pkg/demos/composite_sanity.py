"""
Quasi-static robustness of the composite baselines.

Sweeps a constant detuning and a constant amplitude error and prints the
gate infidelity of primitive, CORPSE, BB1 and reduced CinBB.  CORPSE
flattens the detuning curve, BB1 the amplitude curve, CinBB both.

Run:  python3 demos/composite_sanity.py
"""

import numpy as np

from geofilter.montecarlo import quasi_static_infidelity
from geofilter.pulses import RotationSpec, bb1, corpse, primitive, reduced_cinbb

W = 2 * np.pi * 1e7
target = RotationSpec(np.pi, np.pi / 2)
pulses = {
    "primitive": primitive(target, W),
    "corpse": corpse(target, W),
    "bb1": bb1(target, W),
    "cinbb": reduced_cinbb(target, W),
}

for channel, label, values in (
    ("d", "detuning / Omega_max", np.array([0.01, 0.02, 0.05, 0.1]) * W),
    ("a", "amplitude error", np.array([0.01, 0.02, 0.05, 0.1])),
):
    print(f"\n{label}")
    scale = W if channel == "d" else 1.0
    print(f"{'':>10}" + "".join(f"{v / scale:>11.2f}" for v in values))
    for name, p in pulses.items():
        inf = quasi_static_infidelity(p, target.unitary(), values, channel)
        print(f"{name:>10}" + "".join(f"{x:11.2e}" for x in inf))
