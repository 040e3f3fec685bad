import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings, strategies as st

from koiterfsi.discrete import (
    PeriodicGrid2D,
    ScalarField2D,
    derivative,
    diff_quotient,
    fourier_field,
    inner,
    lp_norm,
    mollify,
    nikolskii_norm,
    shift_values,
    sobolev_norm_hs,
    spectral_shift,
    trig_eval,
)

GRID = PeriodicGrid2D(16, 16)


def random_field(grid, seed, kmax=4):
    rng = np.random.default_rng(seed)
    modes = [(k1, k2, kind, rng.normal() / (1 + k1 * k1 + k2 * k2))
             for k1 in range(kmax) for k2 in range(-kmax + 1, kmax) for kind in ("cos", "sin")]
    return fourier_field(grid, modes)


def test_grid_rejects_odd_or_small():
    with pytest.raises(ValueError):
        PeriodicGrid2D(9, 16)
    with pytest.raises(ValueError):
        PeriodicGrid2D(6, 6)


def test_field_shape_checked():
    with pytest.raises(ValueError):
        ScalarField2D(GRID, np.zeros((8, 8)))


def test_derivative_of_resolved_mode():
    f = fourier_field(GRID, [(1, 0, "sin", 1.0)])
    y1, _ = GRID.coords()
    d = derivative(f, (1, 0))
    np.testing.assert_allclose(d.values, 2 * np.pi * np.cos(2 * np.pi * y1), atol=1e-12)


def test_derivative_of_constant_vanishes():
    f = ScalarField2D(GRID, np.full(GRID.shape, 3.7))
    for order in [(1, 0), (0, 1), (2, 0), (1, 1), (2, 1), (0, 3)]:
        assert np.max(np.abs(derivative(f, order).values)) < 1e-12


def test_mixed_third_derivative_matches_sympy():
    y1s, y2s = sp.symbols("y1 y2")
    expr = sp.sin(2 * sp.pi * y1s) * sp.sin(2 * sp.pi * y2s)
    oracle = sp.lambdify((y1s, y2s), sp.diff(expr, y1s, 2, y2s, 1), "numpy")
    y1, y2 = GRID.coords()
    f = ScalarField2D(GRID, np.sin(2 * np.pi * y1) * np.sin(2 * np.pi * y2))
    d = derivative(f, (2, 1))
    np.testing.assert_allclose(d.values, oracle(y1, y2), atol=1e-9)
    np.testing.assert_allclose(
        d.values, -(2 * np.pi) ** 3 * np.sin(2 * np.pi * y1) * np.cos(2 * np.pi * y2), atol=1e-9)


def test_derivative_order_limit():
    with pytest.raises(ValueError):
        derivative(ScalarField2D.zeros(GRID), (2, 2))


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_derivatives_commute(seed):
    f = random_field(GRID, seed)
    a = derivative(derivative(f, (1, 0)), (0, 1))
    b = derivative(derivative(f, (0, 1)), (1, 0))
    assert np.max(np.abs(a.values - b.values)) < 1e-12


@given(st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_odd_derivatives_skew_adjoint(seed):
    f = random_field(GRID, seed)
    g = random_field(GRID, seed + 1)
    for order in [(1, 0), (0, 1), (2, 1), (0, 3)]:
        lhs = inner(derivative(f, order), g, GRID)
        rhs = -inner(f, derivative(g, order), GRID)
        assert abs(lhs - rhs) < 1e-11


def test_trig_eval_reproduces_nodes_and_midpoints():
    f = fourier_field(GRID, [(1, 2, "cos", 0.3), (3, -1, "sin", 0.2)])
    y1, y2 = GRID.coords()
    np.testing.assert_allclose(trig_eval(f.values, GRID, y1, y2), f.values, atol=1e-13)
    pts = np.array([0.123, 0.77]), np.array([0.5, 0.031])
    exact = (0.3 * np.cos(2 * np.pi * (pts[0] + 2 * pts[1]))
             + 0.2 * np.sin(2 * np.pi * (3 * pts[0] - pts[1])))
    np.testing.assert_allclose(trig_eval(f.values, GRID, *pts), exact, atol=1e-13)


def test_half_cell_shift():
    f = fourier_field(GRID, [(2, 1, "sin", 1.0)])
    y1, y2 = GRID.coords()
    shifted = spectral_shift(f.values, GRID, (0.5, 0.0))
    exact = np.sin(2 * np.pi * (2 * (y1 + 0.5 * GRID.h1) + y2))
    np.testing.assert_allclose(shifted, exact, atol=1e-13)


def test_diff_quotient_constant_is_zero():
    f = ScalarField2D(GRID, np.full(GRID.shape, -2.0))
    for s in (0.0, 0.25, 1.0):
        assert np.all(diff_quotient(f, s, 3 * GRID.h1, 0).values == 0.0)


def test_diff_quotient_first_order_convergence():
    errs = []
    for n in (16, 32, 64):
        g = PeriodicGrid2D(n, n)
        f = fourier_field(g, [(1, 0, "sin", 1.0)])
        y1, _ = g.coords()
        dq = diff_quotient(f, 1.0, g.h1, 0)
        errs.append(np.max(np.abs(dq.values - 2 * np.pi * np.cos(2 * np.pi * y1))))
    rates = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(rates > 0.9)


def test_diff_quotient_rejects_incommensurate_shift():
    with pytest.raises(ValueError):
        diff_quotient(ScalarField2D.zeros(GRID), 0.5, 0.3 * GRID.h1)


@given(st.integers(0, 10_000), st.floats(0.0, 1.0), st.integers(1, 8), st.sampled_from([0, 1]))
@settings(max_examples=40, deadline=None)
def test_summation_by_parts(seed, s, m, direction):
    g = random_field(GRID, seed)
    q = random_field(GRID, seed + 7)
    h = m * GRID.spacing[direction]
    lhs = inner(diff_quotient(g, s, h, direction), q, GRID)
    rhs = -inner(g, diff_quotient(q, s, -h, direction), GRID)
    assert abs(lhs - rhs) < 1e-13 * max(1.0, abs(lhs)) * 10


@given(st.integers(0, 10_000), st.integers(1, 15))
@settings(max_examples=20, deadline=None)
def test_diff_quotient_commutes_with_translation(seed, cells):
    g = random_field(GRID, seed)
    shifted = ScalarField2D(GRID, shift_values(g.values, cells, 1))
    a = diff_quotient(shifted, 0.25, 2 * GRID.h1, 0).values
    b = shift_values(diff_quotient(g, 0.25, 2 * GRID.h1, 0).values, cells, 1)
    assert np.array_equal(a, b)


def test_diff_quotient_linear():
    f, g = random_field(GRID, 1), random_field(GRID, 2)
    lhs = diff_quotient(2.0 * f - 3.0 * g, 0.4, GRID.h2, 1).values
    rhs = 2.0 * diff_quotient(f, 0.4, GRID.h2, 1).values - 3.0 * diff_quotient(g, 0.4, GRID.h2, 1).values
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)


def test_nikolskii_of_constant_is_lq_norm():
    f = ScalarField2D(GRID, np.full(GRID.shape, 1.5))
    assert nikolskii_norm(f, 0.3) == pytest.approx(lp_norm(f, GRID), abs=1e-14)


def test_nikolskii_single_mode_brute_force():
    grid = PeriodicGrid2D(8, 8)
    f = fourier_field(grid, [(1, 0, "sin", 1.0)])
    alpha = 0.25
    # direct quadrature of the quotient at every shift, both directions
    y1, y2 = grid.coords()
    best = 0.0
    for direction in (0, 1):
        for m in range(1, 5):
            h = m / 8
            if direction == 0:
                moved = np.sin(2 * np.pi * (y1 + h))
            else:
                moved = np.sin(2 * np.pi * y1)
            dq = (moved - np.sin(2 * np.pi * y1)) / h**alpha
            best = max(best, np.sqrt(np.mean(dq**2)))
    expected = best + np.sqrt(0.5)
    assert nikolskii_norm(f, alpha) == pytest.approx(expected, rel=1e-12)


def test_nikolskii_monotone_in_alpha():
    rng = np.random.default_rng(3)
    f = ScalarField2D(GRID, rng.normal(size=GRID.shape))
    vals = [nikolskii_norm(f, a) for a in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert np.all(np.diff(vals) >= 0)


def test_sobolev_norm_examples():
    c = ScalarField2D(GRID, np.full(GRID.shape, -0.7))
    for s in (0.0, 0.5, 2.0):
        assert sobolev_norm_hs(c, s) == pytest.approx(0.7, rel=1e-13)
    y1, _ = GRID.coords()
    # unit complex mode e^{2 pi i y1} has unit L2 norm: use cos + sin pair
    mode = ScalarField2D(GRID, np.sqrt(2) * np.cos(2 * np.pi * y1))
    assert sobolev_norm_hs(mode, 1.0) == pytest.approx(np.sqrt(1 + 4 * np.pi**2), rel=1e-13)


@given(st.integers(0, 10_000))
@settings(max_examples=20, deadline=None)
def test_h0_is_l2(seed):
    rng = np.random.default_rng(seed)
    f = ScalarField2D(GRID, rng.normal(size=GRID.shape))
    assert sobolev_norm_hs(f, 0.0) == pytest.approx(lp_norm(f, GRID), rel=1e-13)


def test_nikolskii_below_sobolev_on_basis():
    # embedding direction: N^{alpha,2} controlled by H^beta for beta > alpha
    ratios = []
    for k in range(0, 6):
        f = fourier_field(GRID, [(k, 1, "cos", 1.0)])
        ratios.append(nikolskii_norm(f, 0.25) / sobolev_norm_hs(f, 0.5))
    assert max(ratios) < 2.5


def test_mollify_constant_and_decay():
    c = ScalarField2D(GRID, np.full(GRID.shape, 2.0))
    np.testing.assert_allclose(mollify(c, 0.1).values, 2.0, atol=1e-14)
    f = fourier_field(GRID, [(2, 0, "cos", 1.0)])
    m = mollify(f, 0.05)
    k2 = (4 * np.pi) ** 2
    np.testing.assert_allclose(m.values, np.exp(-0.5 * 0.05**2 * k2) * f.values, atol=1e-13)
