"""
|0> -> |1> transfer under T1/T2 relaxation.

For gamma1 = 1e3 /s and several gamma2/gamma1 ratios, compares the exact
Bloch-equation distance to the south pole for the primitive, CORPSE, BB1 and
an optimized pulse of length 4 T_P.  Composite pulses only add exposure
time; the optimized path waits near the pole where T1 alone acts.

Run:  python3 demos/relaxation_sweep.py
"""

import numpy as np

from geofilter.bloch import relaxation_sweep

W = 2 * np.pi * 1e7
rows = relaxation_sweep([10, 20, 50, 100], gamma1=1e3, omega_max=W, T=4 * np.pi / W)
print(f"{'g2/g1':>6} {'primitive':>11} {'CORPSE':>11} {'BB1':>11} {'ROC':>11} {'gain':>6}")
for r in rows:
    gain = r["distance_primitive"] / r["distance_roc"]
    print(f"{r['gamma2_over_gamma1']:6.0f} {r['distance_primitive']:11.3e} "
          f"{r['distance_corpse']:11.3e} {r['distance_bb1']:11.3e} {r['distance_roc']:11.3e} "
          f"{gain:6.2f}")
