"""
Staggered (MAC) grid on the reference box ``omega x [s_bot, s_top]``.

Layout
------
Horizontal cell centres sit on the ``omega`` nodes ``(i h1, j h2)``.  With
``nz`` cells in the vertical:

* ``u1`` at x-faces ``((i+1/2) h1, j h2, s_k)``, ``nz`` levels,
* ``u2`` at y-faces ``(i h1, (j+1/2) h2, s_k)``, ``nz`` levels,
* ``u3`` at z-faces ``(i h1, j h2, s_bot + k hz)``, ``nz + 1`` levels,
* ``p`` at cell centres, ``nz`` levels,

where ``s_k = s_bot + (k + 1/2) hz``.  Arrays are indexed ``[k, i, j]``.
Both horizontal components vanish on the bottom and top walls (imposed with
odd reflection ghosts), ``u3`` vanishes on the bottom face and its top level
is the interface velocity.

Flattened unknown vectors are level-major: each level is one ``n1 x n2``
plane in C order, so every constant-coefficient operator is a Kronecker
product ``Z (x) X1 (x) X2`` and block-circulant in the horizontal index.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .discrete import PeriodicGrid2D

__all__ = [
    "FluidGrid",
    "StaggeredField3D",
    "kron3",
    "periodic_ops",
    "vertical_ops",
    "CirculantBlockSolver",
]


@dataclass(frozen=True)
class FluidGrid:
    """MAC grid of the reference box ``omega x [s_bot, s_top]``."""

    n1: int
    n2: int
    nz: int
    depth: float = 1.0
    s_top: float = 0.0
    L1: float = 1.0
    L2: float = 1.0

    def __post_init__(self):
        if self.nz < 2:
            raise ValueError("need at least two vertical cells")
        PeriodicGrid2D(self.n1, self.n2, self.L1, self.L2)

    @property
    def omega(self):
        return PeriodicGrid2D(self.n1, self.n2, self.L1, self.L2)

    @property
    def s_bot(self):
        return self.s_top - self.depth

    @property
    def h1(self):
        return self.L1 / self.n1

    @property
    def h2(self):
        return self.L2 / self.n2

    @property
    def hz(self):
        return self.depth / self.nz

    @property
    def vol(self):
        return self.h1 * self.h2 * self.hz

    @property
    def M(self):
        return self.n1 * self.n2

    @property
    def s_centers(self):
        return self.s_bot + (np.arange(self.nz) + 0.5) * self.hz

    @property
    def s_faces(self):
        return self.s_bot + np.arange(self.nz + 1) * self.hz

    def face_weights(self):
        """Trapezoid weights of the ``nz + 1`` face levels."""
        w = np.ones(self.nz + 1)
        w[0] = w[-1] = 0.5
        return w


@dataclass
class StaggeredField3D:
    """Velocity and pressure on a :class:`FluidGrid`."""

    grid: FluidGrid
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    p: np.ndarray = None

    def __post_init__(self):
        g = self.grid
        c = (g.nz, g.n1, g.n2)
        f = (g.nz + 1, g.n1, g.n2)
        if self.p is None:
            self.p = np.zeros(c)
        for name, arr, shape in (("u1", self.u1, c), ("u2", self.u2, c),
                                 ("u3", self.u3, f), ("p", self.p, c)):
            if np.shape(arr) != shape:
                raise ValueError(f"{name} has shape {np.shape(arr)}, expected {shape}")

    @classmethod
    def zeros(cls, grid):
        c = (grid.nz, grid.n1, grid.n2)
        return cls(grid, np.zeros(c), np.zeros(c), np.zeros((grid.nz + 1, grid.n1, grid.n2)),
                   np.zeros(c))

    @property
    def top(self):
        """Interface velocity (top level of ``u3``)."""
        return self.u3[-1]

    def velocity_vector(self):
        """Unknown vector ``[u1, u2, u3 (levels 1..nz)]``; the bottom face is dropped."""
        return np.concatenate([self.u1.ravel(), self.u2.ravel(), self.u3[1:].ravel()])

    @classmethod
    def from_velocity_vector(cls, grid, x, p=None):
        n = grid.nz * grid.M
        u1 = x[:n].reshape(grid.nz, grid.n1, grid.n2)
        u2 = x[n:2 * n].reshape(grid.nz, grid.n1, grid.n2)
        u3 = np.zeros((grid.nz + 1, grid.n1, grid.n2))
        u3[1:] = x[2 * n:3 * n].reshape(grid.nz, grid.n1, grid.n2)
        return cls(grid, u1, u2, u3, p)

    def copy(self):
        return StaggeredField3D(self.grid, self.u1.copy(), self.u2.copy(), self.u3.copy(),
                                self.p.copy())


def kron3(z, x1, x2):
    """``z (x) x1 (x) x2`` as CSR."""
    return sp.kron(sp.kron(z, x1, format="csr"), x2, format="csr")


def _circ(n, offsets, coeffs):
    rows, cols, vals = [], [], []
    for o, c in zip(offsets, coeffs):
        rows.append(np.arange(n))
        cols.append((np.arange(n) + o) % n)
        vals.append(np.full(n, c))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def periodic_ops(n, h):
    """Periodic 1D operators; ``fwd``: ``i, i+1 -> i+1/2``; ``bwd``: ``i-1, i -> i``."""
    return {
        "I": sp.identity(n, format="csr"),
        "Dfwd": _circ(n, (0, 1), (-1 / h, 1 / h)),
        "Dbwd": _circ(n, (-1, 0), (-1 / h, 1 / h)),
        "Afwd": _circ(n, (0, 1), (0.5, 0.5)),
        "Abwd": _circ(n, (-1, 0), (0.5, 0.5)),
        "Dc": _circ(n, (-1, 1), (-0.5 / h, 0.5 / h)),
    }


def vertical_ops(nz, hz):
    """Vertical operators for wall-bounded cells.

    Centre quantities use odd ghosts (zero wall value); face quantities are
    stored on all ``nz + 1`` faces.  ``E3`` embeds the ``nz`` face unknowns
    (levels ``1..nz``) into all faces with a zero bottom value; ``E3i`` embeds
    interior faces only.
    """
    c2f_d = sp.lil_matrix((nz + 1, nz))
    c2f_a = sp.lil_matrix((nz + 1, nz))
    for k in range(nz + 1):
        if k == 0:
            c2f_d[k, 0] = 2 / hz
        elif k == nz:
            c2f_d[k, nz - 1] = -2 / hz
        else:
            c2f_d[k, k] = 1 / hz
            c2f_d[k, k - 1] = -1 / hz
            c2f_a[k, k] = 0.5
            c2f_a[k, k - 1] = 0.5
    f2c_d = sp.lil_matrix((nz, nz + 1))
    f2c_a = sp.lil_matrix((nz, nz + 1))
    for k in range(nz):
        f2c_d[k, k + 1] = 1 / hz
        f2c_d[k, k] = -1 / hz
        f2c_a[k, k + 1] = 0.5
        f2c_a[k, k] = 0.5
    cc = sp.lil_matrix((nz, nz))
    for k in range(nz):
        if k + 1 < nz:
            cc[k, k + 1] += 0.5 / hz
        else:
            cc[k, k] -= 0.5 / hz
        if k - 1 >= 0:
            cc[k, k - 1] -= 0.5 / hz
        else:
            cc[k, k] += 0.5 / hz
    ff = sp.lil_matrix((nz + 1, nz + 1))
    for k in range(nz + 1):
        if k == 0:
            ff[k, 1], ff[k, 0] = 1 / hz, -1 / hz
        elif k == nz:
            ff[k, nz], ff[k, nz - 1] = 1 / hz, -1 / hz
        else:
            ff[k, k + 1], ff[k, k - 1] = 0.5 / hz, -0.5 / hz
    E3 = sp.lil_matrix((nz + 1, nz))
    for k in range(1, nz + 1):
        E3[k, k - 1] = 1.0
    # interior faces only (both end faces held at zero)
    E3i = sp.lil_matrix((nz + 1, nz - 1))
    for k in range(1, nz):
        E3i[k, k - 1] = 1.0
    out = {
        "I": sp.identity(nz, format="csr"),
        "Dc2f": c2f_d, "Ac2f": c2f_a, "Df2c": f2c_d, "Af2c": f2c_a,
        "Dcc": cc, "Dff": ff, "E3": E3, "E3i": E3i,
    }
    return {k: sp.csr_matrix(v) for k, v in out.items()}


class CirculantBlockSolver:
    """Exact solver for matrices that are block-circulant in the horizontal index.

    The matrix acts on level-major vectors with ``nlev`` levels of
    ``n1 x n2`` planes and commutes with periodic horizontal translation.
    Each horizontal wavenumber decouples into a dense ``nlev x nlev`` block,
    inverted once; application is two real FFTs and a batched mat-vec.

    Parameters
    ----------
    A : sparse matrix
    nlev, n1, n2 : int
    singular_zero_mode : bool
        Use the pseudo-inverse for the zero wavenumber block (for systems
        with a constant-pressure null space).
    """

    def __init__(self, A, nlev, n1, n2, singular_zero_mode=False):
        self.nlev, self.n1, self.n2 = nlev, n1, n2
        M = n1 * n2
        A = sp.csr_matrix(A)
        rows = np.arange(nlev) * M
        sub = A[rows].tocoo()
        a = sub.row
        b = sub.col // M
        rem = sub.col % M
        i = rem // n2
        j = rem % n2
        m2 = n2 // 2 + 1
        k1 = np.arange(n1)[:, None]
        k2 = np.arange(m2)[:, None]
        e1 = np.exp(2j * np.pi * k1 * i[None, :] / n1)
        e2 = np.exp(2j * np.pi * k2 * j[None, :] / n2)
        sym = np.zeros((n1, m2, nlev, nlev), dtype=complex)
        # group entries by block (a, b); sum their phase factors
        key = a * nlev + b
        order = np.argsort(key, kind="stable")
        key_s = key[order]
        starts = np.flatnonzero(np.r_[True, key_s[1:] != key_s[:-1]])
        ends = np.r_[starts[1:], len(key_s)]
        for s0, s1 in zip(starts, ends):
            idx = order[s0:s1]
            blk = (e1[:, idx] * sub.data[idx]) @ e2[:, idx].T
            kk = key_s[s0]
            sym[:, :, kk // nlev, kk % nlev] = blk
        flat = sym.reshape(-1, nlev, nlev)
        if singular_zero_mode:
            inv0 = np.linalg.pinv(flat[0])
            inv_rest = np.linalg.inv(flat[1:])
            inv = np.concatenate([inv0[None], inv_rest])
        else:
            inv = np.linalg.inv(flat)
        self._inv = inv.reshape(n1, m2, nlev, nlev)

    def solve(self, r):
        nlev, n1, n2 = self.nlev, self.n1, self.n2
        R = np.fft.rfft2(np.asarray(r).reshape(nlev, n1, n2), axes=(1, 2))
        X = np.einsum("xyab,bxy->axy", self._inv, R, optimize=True)
        return np.fft.irfft2(X, s=(n1, n2), axes=(1, 2)).ravel()

    __call__ = solve
