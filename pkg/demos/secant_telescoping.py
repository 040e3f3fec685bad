"""
Why the shell step uses a Simpson secant
========================================

The change of metric and change of curvature are polynomials of low degree in
the displacement jet.  Averaging their derivative along the segment from
eta_a to eta_b with Simpson weights reproduces the increment T(eta_b) - T(eta_a)
exactly, which is what makes the discrete energy telescope.  Nudging the
middle weight from 4/6 to 4.1/6 (the ``simpson_weights`` fault hook) breaks it.
"""

import numpy as np

from koiterfsi import faults
from koiterfsi.discrete import fourier_field
from koiterfsi.geometry import cylinder
from koiterfsi.shell import curvature_change, jet_from_field, metric_change, simpson_tensor

surf = cylinder(1.3)
grid = surf.grid(16)
rng = np.random.default_rng(4)


def random_field(sup):
    modes = [(k1, k2, kind, rng.normal()) for k1 in range(3) for k2 in range(-2, 3)
             for kind in ("cos", "sin")]
    f = fourier_field(grid, modes)
    f.values *= sup / np.max(np.abs(f.values))
    return f


a, b = random_field(0.3), random_field(0.3)
ja, jb = jet_from_field(a), jet_from_field(b)

for which, T in (("G", metric_change), ("R", curvature_change)):
    exact = T(surf, jb) - T(surf, ja)
    good = simpson_tensor(surf, which, ja, jb, jb - ja)
    with faults.inject("simpson_weights"):
        bad = simpson_tensor(surf, which, ja, jb, jb - ja)
    print(f"{which}: Simpson error {np.max(np.abs(good - exact)):.2e}, "
          f"perturbed-weight error {np.max(np.abs(bad - exact)):.2e}")
