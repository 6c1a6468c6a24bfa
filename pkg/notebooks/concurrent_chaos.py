"""
Chaos in the concurrent reaction
================================

Scaled mean-field dynamics of ``A + A <-> A2`` fed by a bath of atoms.
The first part compares the weak-coupling modulation with its leading-order
prediction; the second scans ``c1`` at energy 100 and prints the largest
Lyapunov exponent and the section filling fraction.  The scan takes a few
minutes on one core.
"""

import numpy as np

from ultrakin.chaos import measure_modulation, regime_scan
from ultrakin.meanfield import integrate, nondim_vector_field, perturbative_modulation

# weak coupling: |a|^2 oscillates, and its envelope is modulated at c2 - 1
A0, c2 = 200.0, 1.1
for c1 in (2e-5, 4e-5, 8e-5):
    fit = measure_modulation(integrate(nondim_vector_field((c1, c2)), [A0, 0.0], 700.0, dt=0.01))
    pred = perturbative_modulation(c1, c2, A0)
    print(f"c1 = {c1:.0e}: A_mod {fit.amplitude:8.3f} (predicted {pred.amplitude:8.3f}), "
          f"w_mod {fit.frequency:.4f} (predicted {pred.frequency:.4f})")

# regime scan: integrable -> chaotic -> integrable again
scan = regime_scan(E=100.0, c2=1.1, trajectories=25, tau_max=5000.0, horizon=5000.0)
print("\n     c1     lambda_max   filling")
for row in scan.rows:
    print(f"{row.c1:8.0e}   {row.lambda_max:10.2e}   {row.filling_fraction:7.3f}")
print("interior maximum of lambda at c1 =", scan.rows[int(np.argmax(scan.column("lambda_max")))].c1)
