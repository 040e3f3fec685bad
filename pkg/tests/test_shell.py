import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from koiterfsi import faults
from koiterfsi.discrete import PeriodicGrid2D, ScalarField2D, fourier_field, inner, spectral_derivative
from koiterfsi.geometry import cylinder, flat_channel, gamma_from_frame
from koiterfsi.shell import (
    DisplacementJet,
    ShellParams,
    SymTensor2Field,
    bending_terms,
    contract,
    curvature_change,
    curvature_remainder,
    elastic_residual,
    elasticity_apply,
    frechet_forms,
    jet_from_field,
    koiter_energy,
    metric_change,
    node_frame,
    plate_symbol,
    regularization_energy,
    simpson_derivative,
    simpson_tensor,
)

SURFACES = [flat_channel(), cylinder(1.3)]
PARAMS = ShellParams(thickness=0.7, lame_lambda=1.8, lame_mu=0.6, reg_eps=1e-3)


def smooth(surf, seed, sup=0.1, n=16, kmax=2):
    grid = surf.grid(n)
    rng = np.random.default_rng(seed)
    modes = [(k1, k2, kind, rng.normal()) for k1 in range(kmax + 1)
             for k2 in range(-kmax, kmax + 1) for kind in ("cos", "sin")]
    f = fourier_field(grid, modes)
    f.values *= sup / np.max(np.abs(f.values))
    return f


def test_params_validation():
    with pytest.raises(ValueError):
        ShellParams(thickness=0.0)
    with pytest.raises(ValueError):
        ShellParams(reg_eps=-1.0)


def test_sym_tensor_roundtrip():
    T = np.array([[1.0, 2.0], [2.0, 3.0]])
    s = SymTensor2Field.from_array(T)
    assert (s.g11, s.g12, s.g22) == (1.0, 2.0, 3.0)
    np.testing.assert_array_equal(s.to_array(), T)


@pytest.mark.parametrize("surf", SURFACES)
def test_zero_displacement(surf):
    jet = jet_from_field(ScalarField2D.zeros(surf.grid(16)))
    assert np.all(metric_change(surf, jet) == 0)
    assert np.max(np.abs(curvature_change(surf, jet))) < 1e-15
    assert koiter_energy(surf, PARAMS, jet) == pytest.approx((0.0, 0.0), abs=1e-30)
    assert np.max(np.abs(elastic_residual(surf, PARAMS, ScalarField2D.zeros(surf.grid(16))).values)) < 1e-15


def test_flat_tensors():
    f = smooth(flat_channel(), 3, sup=0.3)
    jet = jet_from_field(f)
    G = metric_change(flat_channel(), jet)
    np.testing.assert_allclose(G, np.einsum("a...,b...->ab...", jet.grad, jet.grad), atol=1e-15)
    np.testing.assert_allclose(curvature_change(flat_channel(), jet), jet.hess, atol=1e-15)


@pytest.mark.parametrize("surf", SURFACES)
def test_curvature_affine_in_hessian(surf):
    f = smooth(surf, 5, sup=0.2)
    jet = jet_from_field(f)
    frame = node_frame(surf, f.grid)
    g = gamma_from_frame(frame, jet.eta)
    base = curvature_change(surf, jet) - g * jet.hess
    rng = np.random.default_rng(0)
    for _ in range(3):
        H = rng.normal(size=jet.hess.shape)
        H = 0.5 * (H + H.transpose(1, 0, 2, 3))
        other = DisplacementJet(jet.eta, jet.grad, H, jet.grid)
        np.testing.assert_allclose(curvature_change(surf, other) - g * H, base, atol=1e-12)
    np.testing.assert_allclose(curvature_remainder(surf, jet), base, atol=1e-12)


def test_elasticity_flat_identity():
    p = ShellParams(1.0, 1.0, 1.0, 0.0)
    out = elasticity_apply(None, p, np.eye(2), A=np.eye(2))
    np.testing.assert_allclose(out, 20.0 / 3.0 * np.eye(2), atol=1e-14)
    assert np.all(elasticity_apply(None, p, np.zeros((2, 2)), A=np.eye(2)) == 0)


@pytest.mark.parametrize("surf", SURFACES)
def test_elasticity_self_adjoint_and_positive(surf):
    rng = np.random.default_rng(1)
    L1, L2 = surf.periods
    y = (rng.random(1000) * L1, rng.random(1000) * L2)
    E = rng.normal(size=(2, 2, 1000))
    F = rng.normal(size=(2, 2, 1000))
    E = 0.5 * (E + E.transpose(1, 0, 2))
    F = 0.5 * (F + F.transpose(1, 0, 2))
    AE = elasticity_apply(surf, PARAMS, E, y)
    AF = elasticity_apply(surf, PARAMS, F, y)
    np.testing.assert_allclose(contract(AE, F), contract(E, AF), atol=1e-12)
    assert np.all(contract(AE, E) > 0)


def test_flat_single_mode_bending():
    # (1/48) int (c_lambda + 4 mu) (eta_11)^2 with eta = c sin(2 pi y1), lambda = mu = h = 1
    c = 0.01
    grid = PeriodicGrid2D(32, 32)
    f = fourier_field(grid, [(1, 0, "sin", c)])
    _, bend = koiter_energy(flat_channel(), ShellParams(1.0, 1.0, 1.0, 0.0), jet_from_field(f))
    assert bend == pytest.approx(8 * np.pi**4 * c**2 / 9, rel=1e-13)


@pytest.mark.parametrize("surf", SURFACES)
def test_energy_mesh_convergence(surf):
    vals = []
    for n in (16, 32):
        grid = surf.grid(n)
        f = fourier_field(grid, [(1, 1, "cos", 0.05), (0, 2, "sin", 0.02)])
        vals.append(koiter_energy(surf, PARAMS, jet_from_field(f)))
    np.testing.assert_allclose(vals[0], vals[1], rtol=1e-12)


@pytest.mark.parametrize("surf", SURFACES)
@given(cells=st.tuples(st.integers(0, 15), st.integers(0, 15)))
@settings(max_examples=10, deadline=None)
def test_energy_translation_invariant(surf, cells):
    f = smooth(surf, 11, sup=0.2)
    moved = ScalarField2D(f.grid, np.roll(f.values, cells, axis=(0, 1)))
    e0 = koiter_energy(surf, PARAMS, jet_from_field(f))
    e1 = koiter_energy(surf, PARAMS, jet_from_field(moved))
    # on the cylinder grid shifts are rotations and axial translations
    np.testing.assert_allclose(e1, e0, rtol=1e-12)
    assert regularization_energy(PARAMS, moved) == pytest.approx(regularization_energy(PARAMS, f), rel=1e-12)


@pytest.mark.parametrize("surf", SURFACES)
@pytest.mark.parametrize("seed", range(4))
def test_frechet_matches_central_differences(surf, seed):
    eta = smooth(surf, seed)
    xi = smooth(surf, seed + 100)
    am, ab = frechet_forms(surf, PARAMS, jet_from_field(eta), xi)
    step = 1e-5
    ep = koiter_energy(surf, PARAMS, jet_from_field(eta + step * xi))
    em = koiter_energy(surf, PARAMS, jet_from_field(eta - step * xi))
    fd = [(p - m) / (2 * step) for p, m in zip(ep, em)]
    assert am == pytest.approx(fd[0], rel=1e-6)
    assert ab == pytest.approx(fd[1], rel=1e-6)


@pytest.mark.parametrize("surf", SURFACES)
def test_frechet_zero_test_function(surf):
    eta = smooth(surf, 1)
    assert frechet_forms(surf, PARAMS, jet_from_field(eta), ScalarField2D.zeros(eta.grid)) == (0.0, 0.0)


@pytest.mark.parametrize("surf", SURFACES)
@pytest.mark.parametrize("seed", range(3))
def test_bending_terms_sum(surf, seed):
    eta, xi = smooth(surf, seed, 0.2), smooth(surf, seed + 50, 0.2)
    jet = jet_from_field(eta)
    _, ab = frechet_forms(surf, PARAMS, jet, xi)
    assert sum(bending_terms(surf, PARAMS, jet, xi)) == pytest.approx(ab, rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("surf", SURFACES)
def test_simpson_degenerate_interval(surf):
    eta, xi = smooth(surf, 2), smooth(surf, 3)
    jet = jet_from_field(eta)
    am, ab = frechet_forms(surf, PARAMS, jet, xi)
    assert simpson_derivative(surf, PARAMS, "G", jet, jet, xi) == pytest.approx(am, rel=1e-12)
    assert simpson_derivative(surf, PARAMS, "R", jet, jet, xi) == pytest.approx(ab, rel=1e-12)
    zero = ScalarField2D.zeros(eta.grid)
    assert simpson_derivative(surf, PARAMS, "G", jet, jet, zero) == 0.0


@pytest.mark.parametrize("surf", SURFACES)
@pytest.mark.parametrize("which", ["G", "R"])
@given(seed=st.integers(0, 10_000))
@settings(max_examples=8, deadline=None)
def test_simpson_telescopes_pointwise(surf, which, seed):
    a, b = smooth(surf, seed, 0.3), smooth(surf, seed + 1, 0.3)
    ja, jb = jet_from_field(a), jet_from_field(b)
    T = {"G": metric_change, "R": curvature_change}[which]
    sec = simpson_tensor(surf, which, ja, jb, jb - ja)
    np.testing.assert_allclose(sec, T(surf, jb) - T(surf, ja), atol=1e-11)


def test_simpson_fault_breaks_telescoping():
    surf = cylinder(1.3)
    a, b = smooth(surf, 0, 0.3), smooth(surf, 1, 0.3)
    ja, jb = jet_from_field(a), jet_from_field(b)
    exact = metric_change(surf, jb) - metric_change(surf, ja)
    with faults.inject("simpson_weights"):
        bad = simpson_tensor(surf, "G", ja, jb, jb - ja)
    assert np.max(np.abs(bad - exact)) > 1e-4
    with pytest.raises(ValueError):
        with faults.inject("nonsense"):
            pass


@pytest.mark.parametrize("surf", SURFACES)
@pytest.mark.parametrize("seed", range(5))
def test_residual_duality(surf, seed):
    eta, xi = smooth(surf, seed, 0.2), smooth(surf, seed + 9, 0.2)
    r = elastic_residual(surf, PARAMS, eta)
    am, ab = frechet_forms(surf, PARAMS, jet_from_field(eta), xi)
    g = eta.grid
    reg = 0.0
    for order in [(3, 0), (2, 1), (1, 2), (0, 3)]:
        weight = {0: 1, 3: 1}.get(order[0], 3)
        reg += weight * inner(spectral_derivative(eta.values, g, order),
                              spectral_derivative(xi.values, g, order), g)
    lhs = inner(r, xi, g)
    rhs = am + ab + PARAMS.reg_eps * reg
    assert lhs == pytest.approx(rhs, rel=1e-11, abs=1e-13)


def test_linearised_plate_limit():
    surf = flat_channel()
    grid = PeriodicGrid2D(16, 16)
    mode = fourier_field(grid, [(2, 1, "sin", 1.0)])
    K2 = (2 * np.pi) ** 2 * 5
    expected = (PARAMS.thickness**3 / 24 * (PARAMS.c_lambda + 4 * PARAMS.lame_mu) * K2**2
                + PARAMS.reg_eps * K2**3)
    prev = None
    for c in (1e-2, 1e-3, 1e-4):
        r = elastic_residual(surf, PARAMS, c * mode)
        err = np.max(np.abs(r.values / c - expected * mode.values)) / expected
        if prev is not None:
            assert err < 0.2 * prev
        prev = err
    assert prev < 1e-6
    assert plate_symbol(surf, PARAMS, grid)[2, 1] == pytest.approx(expected, rel=1e-12)
