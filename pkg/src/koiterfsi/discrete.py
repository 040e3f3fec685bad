"""
Periodic grids on the flat torus and the operators used on them.

Derivatives over ``omega`` are Fourier multipliers.  The Nyquist wavenumber is
dropped from every odd multiplier so that derivative operators are real,
mutually commuting and exactly skew-adjoint under the trapezoidal inner
product.  Complex input is kept complex, which lets callers differentiate
through these operators with the complex-step trick.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "PeriodicGrid2D",
    "ScalarField2D",
    "derivative",
    "spectral_derivative",
    "spectral_shift",
    "trig_eval",
    "integrate",
    "inner",
    "lp_norm",
    "diff_quotient",
    "shift_values",
    "nikolskii_norm",
    "shift_sup",
    "sobolev_norm_hs",
    "mollify",
    "fourier_field",
]


@dataclass(frozen=True)
class PeriodicGrid2D:
    """Uniform node grid on the torus ``[0, L1) x [0, L2)``.

    Parameters
    ----------
    n1, n2 : int
        Node counts, even and at least 8.
    L1, L2 : float
        Periods.  The default unit torus is the setting of the flat channel;
        the cylinder uses ``L1 = 2*pi``.
    """

    n1: int
    n2: int
    L1: float = 1.0
    L2: float = 1.0

    def __post_init__(self):
        for n in (self.n1, self.n2):
            if int(n) != n or n < 8 or n % 2:
                raise ValueError(f"grid sizes must be even and >= 8, got {n}")
        if self.L1 <= 0 or self.L2 <= 0:
            raise ValueError("periods must be positive")

    @property
    def shape(self):
        return (self.n1, self.n2)

    @property
    def h1(self):
        return self.L1 / self.n1

    @property
    def h2(self):
        return self.L2 / self.n2

    @property
    def spacing(self):
        return (self.h1, self.h2)

    @property
    def cell_area(self):
        return self.h1 * self.h2

    @property
    def area(self):
        return self.L1 * self.L2

    def coords(self):
        """Node coordinates as two ``(n1, n2)`` arrays (``ij`` indexing)."""
        y1 = np.arange(self.n1) * self.h1
        y2 = np.arange(self.n2) * self.h2
        return np.meshgrid(y1, y2, indexing="ij")

    def wavenumbers(self):
        """Angular wavenumbers ``(k1[:, None], k2[None, :])`` including Nyquist."""
        k1 = 2 * np.pi * np.fft.fftfreq(self.n1, d=self.h1)
        k2 = 2 * np.pi * np.fft.fftfreq(self.n2, d=self.h2)
        return k1[:, None], k2[None, :]


@dataclass
class ScalarField2D:
    """Node values of a scalar on a :class:`PeriodicGrid2D`."""

    grid: PeriodicGrid2D
    values: np.ndarray

    def __post_init__(self):
        self.values = np.asarray(self.values)
        if self.values.shape != self.grid.shape:
            raise ValueError(
                f"values shape {self.values.shape} does not match grid {self.grid.shape}"
            )

    def copy(self):
        return ScalarField2D(self.grid, self.values.copy())

    def _wrap(self, other, op):
        if isinstance(other, ScalarField2D):
            if other.grid != self.grid:
                raise ValueError("fields live on different grids")
            other = other.values
        return ScalarField2D(self.grid, op(self.values, other))

    def __add__(self, other):
        return self._wrap(other, np.add)

    __radd__ = __add__

    def __sub__(self, other):
        return self._wrap(other, np.subtract)

    def __mul__(self, other):
        return self._wrap(other, np.multiply)

    __rmul__ = __mul__

    def __neg__(self):
        return ScalarField2D(self.grid, -self.values)

    @classmethod
    def zeros(cls, grid):
        return cls(grid, np.zeros(grid.shape))


def _vals(field):
    return field.values if isinstance(field, ScalarField2D) else np.asarray(field)


@lru_cache(maxsize=64)
def _odd_wavenumbers(grid):
    # Nyquist removed: odd multipliers stay real-valued on real data
    k1, k2 = grid.wavenumbers()
    k1 = k1.copy()
    k2 = k2.copy()
    k1[grid.n1 // 2, 0] = 0.0
    k2[0, grid.n2 // 2] = 0.0
    return k1, k2


def _multiplier(grid, order):
    a, b = order
    k1, k2 = _odd_wavenumbers(grid)
    return (1j * k1) ** a * (1j * k2) ** b


def _ifft_like(spec, like):
    out = np.fft.ifft2(spec)
    return out if np.iscomplexobj(like) else out.real


def spectral_derivative(values, grid, order):
    """Apply ``d1**order[0] d2**order[1]`` to node values (array in, array out)."""
    values = np.asarray(values)
    a, b = order
    if a == 0 and b == 0:
        return values.copy()
    if np.iscomplexobj(values):
        # real and imaginary parts separately: FFT round-off must not mix them
        # (complex-step derivatives carry perturbations of size 1e-30)
        return (spectral_derivative(values.real, grid, order)
                + 1j * spectral_derivative(values.imag, grid, order))
    return _ifft_like(_multiplier(grid, (a, b)) * np.fft.fft2(values), values)


def derivative(field, order):
    """Periodic Fourier derivative of a field.

    Parameters
    ----------
    field : ScalarField2D
    order : tuple of int
        Multi-index ``(a, b)`` with ``a + b <= 3``.

    Returns
    -------
    ScalarField2D
    """
    a, b = (int(o) for o in order)
    if a < 0 or b < 0 or a + b > 3:
        raise ValueError("derivative order must be a multi-index of total degree <= 3")
    return ScalarField2D(field.grid, spectral_derivative(field.values, field.grid, (a, b)))


def spectral_shift(values, grid, shift):
    """Evaluate the trigonometric interpolant at nodes offset by ``shift`` cells.

    ``shift = (0.5, 0)`` moves node values to the midpoints between nodes in
    the first direction.  The Nyquist cosine keeps its real interpolant, so a
    half-cell shift removes it.
    """
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return spectral_shift(values.real, grid, shift) + 1j * spectral_shift(values.imag, grid, shift)
    s1, s2 = shift
    k1, k2 = grid.wavenumbers()
    m1 = np.exp(1j * k1 * s1 * grid.h1)
    m2 = np.exp(1j * k2 * s2 * grid.h2)
    m1[grid.n1 // 2, 0] = np.cos(np.pi * s1)
    m2[0, grid.n2 // 2] = np.cos(np.pi * s2)
    return _ifft_like(m1 * m2 * np.fft.fft2(values), values)


def trig_eval(values, grid, y1, y2, order=(0, 0)):
    """Evaluate the real trigonometric interpolant (or a derivative) at points.

    Parameters
    ----------
    values : array_like, shape grid.shape
    y1, y2 : array_like
        Point coordinates, any (common) shape.
    order : tuple of int
        Derivative multi-index; uses the same Nyquist convention as
        :func:`spectral_derivative`.
    """
    values = np.asarray(values)
    if np.iscomplexobj(values):
        return trig_eval(values.real, grid, y1, y2, order) + 1j * trig_eval(
            values.imag, grid, y1, y2, order
        )
    y1 = np.asarray(y1, dtype=float)
    y2 = np.asarray(y2, dtype=float)
    shape = np.broadcast(y1, y2).shape
    p1 = np.broadcast_to(y1, shape).ravel()
    p2 = np.broadcast_to(y2, shape).ravel()
    coef = np.fft.fft2(values) / values.size * _multiplier(grid, order)
    k1, k2 = grid.wavenumbers()
    e1 = np.exp(1j * np.outer(p1, k1[:, 0]))
    e2 = np.exp(1j * np.outer(p2, k2[0, :]))
    out = np.einsum("pa,ab,pb->p", e1, coef, e2, optimize=True).real
    return out.reshape(shape)


def integrate(values, grid):
    """Trapezoidal (periodic) quadrature of node values over the torus."""
    return np.sum(_vals(values)) * grid.cell_area


def inner(f, g, grid):
    """Discrete ``L2(omega)`` inner product."""
    return integrate(_vals(f) * _vals(g), grid)


def lp_norm(values, grid, q=2):
    v = np.abs(_vals(values))
    if np.isinf(q):
        return float(v.max()) if v.size else 0.0
    return float(integrate(v**q, grid) ** (1.0 / q))


def _shift_cells(grid, h, direction):
    spacing = grid.spacing[direction]
    m = h / spacing
    mi = int(round(m))
    if mi == 0 or abs(m - mi) > 1e-9 * max(1.0, abs(m)):
        raise ValueError(f"shift {h} is not a nonzero multiple of the grid spacing {spacing}")
    return mi


def shift_values(values, cells, direction):
    """Periodic translate: returns ``g(x + cells*spacing*e)``."""
    return np.roll(values, -cells, axis=direction)


def _dq_values(values, grid, s, cells, direction):
    h = cells * grid.spacing[direction]
    return (shift_values(values, cells, direction) - values) / (abs(h) ** (s - 1.0) * h)


def diff_quotient(field, s, h, direction=0):
    """Fractional difference quotient ``(g(.+h e) - g)/(|h|**(s-1) h)``.

    Parameters
    ----------
    field : ScalarField2D
    s : float
        Order in ``[0, 1]``; ``s = 1`` is the ordinary difference quotient.
    h : float
        Signed shift, a nonzero multiple of the grid spacing in ``direction``.
    direction : {0, 1}
    """
    if not 0.0 <= s <= 1.0:
        raise ValueError("difference-quotient order must lie in [0, 1]")
    cells = _shift_cells(field.grid, h, direction)
    return ScalarField2D(field.grid, _dq_values(field.values, field.grid, s, cells, direction))


def _all_shifts(grid):
    for direction, n in enumerate(grid.shape):
        for m in range(1, n // 2 + 1):
            yield direction, m


def shift_sup(components, grid, s, q=2):
    """Supremum over grid shifts of ``sum_c ||D^s_h g_c||_{L^q}^q``.

    Returns ``(value, (direction, cells))`` for the maximising shift.  Shifts
    ``h`` and ``-h`` give the same norm on the torus, so only ``0 < h <= L/2``
    is scanned.
    """
    best, arg = 0.0, None
    comps = [np.asarray(c) for c in components]
    for direction, m in _all_shifts(grid):
        tot = 0.0
        for c in comps:
            tot += integrate(np.abs(_dq_values(c, grid, s, m, direction)) ** q, grid)
        if arg is None or tot > best:
            best, arg = tot, (direction, m)
    return float(best), arg


def nikolskii_norm(field, alpha, q=2):
    """Discrete Nikolskii norm ``sup_h ||D^alpha_h g||_{L^q} + ||g||_{L^q}``.

    The supremum runs over every grid shift in both lattice directions.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("Nikolskii order must lie in (0, 1)")
    sup, _ = shift_sup([field.values], field.grid, alpha, q)
    return sup ** (1.0 / q) + lp_norm(field.values, field.grid, q)


def sobolev_norm_hs(field, s_order):
    """Fourier-multiplier ``H^s`` norm ``(sum (1+|k|^2)^s |g_k|^2)^(1/2)``.

    Normalised so that ``s_order = 0`` reproduces the quadrature ``L2`` norm.
    """
    if s_order < 0:
        raise ValueError("Sobolev order must be nonnegative")
    grid = field.grid
    values = _vals(field)
    k1, k2 = grid.wavenumbers()
    spec = np.abs(np.fft.fft2(values)) ** 2
    weight = (1.0 + k1**2 + k2**2) ** s_order
    return float(np.sqrt(np.sum(weight * spec) * grid.area / values.size**2))


def mollify(field, delta):
    """Periodic Gaussian mollification with symbol ``exp(-delta^2 |k|^2 / 2)``."""
    if delta <= 0:
        raise ValueError("mollification radius must be positive")
    grid = field.grid
    k1, k2 = grid.wavenumbers()
    sym = np.exp(-0.5 * delta**2 * (k1**2 + k2**2))
    return ScalarField2D(grid, _ifft_like(sym * np.fft.fft2(field.values), field.values))


def fourier_field(grid, modes):
    """Build a real field from ``(k1, k2, kind, amplitude)`` tuples.

    ``kind`` is ``"cos"`` or ``"sin"``; the mode is
    ``amplitude * trig(2 pi (k1 y1 / L1 + k2 y2 / L2))``.
    """
    y1, y2 = grid.coords()
    out = np.zeros(grid.shape)
    for k1, k2, kind, amp in modes:
        arg = 2 * np.pi * (k1 * y1 / grid.L1 + k2 * y2 / grid.L2)
        if kind == "cos":
            out += amp * np.cos(arg)
        elif kind == "sin":
            out += amp * np.sin(arg)
        else:
            raise ValueError(f"unknown mode kind {kind!r}")
    return ScalarField2D(grid, out)
