"""
Relaxation of the diatomic reaction A + A <-> A2
================================================

A coherent cloud of atoms with an empty molecular mode, evolved exactly
and in mean field.  Prints the breakdown time, the relaxation windows and
the ensemble predictions.  Run with ``python notebooks/diatomic_relaxation.py``.
"""

import numpy as np

from ultrakin.protocols import ensemble_sweep, relaxation_windows, run_diatomic
from ultrakin.quantum import diagonal_ensemble, microcanonical_average, time_average

# exact and mean-field atom numbers for N = 100
run = run_diatomic(100.0, tau_max=20.0, dtau=0.01, entropy=True, entropy_dtau=0.05)
print(f"tau_MF = {run.tau_mf:.2f}")

ev, asym = relaxation_windows(run)
print("evanescent window  [%.2f, %.2f], variance %.3f" % (*ev, time_average(run.atoms, ev)[1]))
print("asymptotic window  [%.2f, %.2f], variance %.3f" % (*asym, time_average(run.atoms, asym)[1]))

# entanglement grows once mean field fails
S = run.entropy
print("mean entropy before 0.3 tau_MF: %.3f" % S.window(0, 0.3 * run.tau_mf).values.mean())
print("mean entropy in [2, 4] tau_MF:  %.3f" % S.window(2 * run.tau_mf, 4 * run.tau_mf).values.mean())

# the long-time state keeps memory of the initial condition
rep = diagonal_ensemble(run.eig, run.state, 0)
micro, _ = microcanonical_average(run.eig, 0, run.state)
print(f"diagonal ensemble {rep.mean_diag:.2f} +- {np.sqrt(rep.fluct_sq):.2f}, microcanonical {micro:.2f}")

# temporal fluctuations shrink with particle number
for row in ensemble_sweep([20, 50, 100, 200]):
    print(f"N = {row.N:5.0f}   sqrt(dN^2)/N = {row.relative_fluct:.4f}")
