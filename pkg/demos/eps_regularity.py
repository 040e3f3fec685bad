"""
What stays bounded as the regularisation vanishes
=================================================

The shell energy carries a small third-order term eps |grad^3 eta|^2.  Start
a bare shell from a rough velocity and shrink eps: the third derivatives grow
without control, but the fractional Nikolskii quantity of the Hessian,
integrated in time, barely moves.  This is a coarse version of the full
check (which uses 32 x 32 and three decades of eps).
"""

from koiterfsi.solver.coupling import time_loop
from koiterfsi.solver.diagnostics import regularity_diagnostics
from koiterfsi.validation import eps_config

print(f"{'eps':>8} {'nikolskii':>12} {'|grad^3 eta|':>14}")
for eps in (1e-2, 1e-3, 1e-4):
    cfg = eps_config(eps, n=16, dt=5e-5, t_end=0.004)
    traj, _, outcome = time_loop(cfg)
    d = regularity_diagnostics(traj, 0.25, with_defect=False, korn=False)
    print(f"{eps:8.0e} {d['nikolskii']:12.4e} {d['grad3']:14.4e}   ({outcome.arm})")
