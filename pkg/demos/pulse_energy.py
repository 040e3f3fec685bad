"""
Energy budget of a plate pulse over a viscous channel
======================================================

A flat elastic lid is kicked with a small velocity pulse.  The fluid below is
set in motion by the solenoidal lift of that pulse, and every step of the
splitting scheme hands energy from the shell to the fluid and burns some of
it in the viscous layer.  The ledger shows where each joule went.
"""

import numpy as np

from koiterfsi.solver.coupling import time_loop
from koiterfsi.validation import pulse_config

# a 16 x 16 x 8 channel, 40 steps of dt = 1e-3
cfg = pulse_config(n=16, nz=8, dt=1e-3, t_end=0.04)
traj, ledger, outcome = time_loop(cfg)
print(f"run ended with '{outcome.arm}' after {outcome.steps} steps")

# fluid and shell kinetic energy plus the stored elastic energy
cols = ("fluid_kinetic", "shell_kinetic", "membrane", "bending", "total")
print(f"{'step':>5}" + "".join(f"{c:>16}" for c in cols))
for r in ledger.rows[::5]:
    print(f"{r['step']:5d}" + "".join(f"{r[c]:16.6e}" for c in cols))

# the books must close: what is lost is exactly what was dissipated
E0 = ledger.column("total")[0]
print("largest energy increase / E0:", np.max(ledger.energy_increments()) / E0)
print("largest balance defect / E0 :", np.max(np.abs(ledger.balance_defects())) / E0)
visc = ledger.column("viscous_dissipation").sum()
num = ledger.column("numerical_dissipation").sum()
print(f"viscous loss {visc:.4e}, numerical loss {num:.4e}")
