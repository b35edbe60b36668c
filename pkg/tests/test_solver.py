"""Linear mode-split solver and the nonlinear fixed-point iteration."""

import numpy as np
import pytest

from cyllab.cylinder import Cylinder, SpectralField, apply_delbar
from cyllab.errors import (
    BallViolationError,
    BandError,
    NoContractionError,
    NonConvergenceError,
    PreconditionError,
)
from cyllab.solver import (
    SpectralBoundaryData,
    dealias_apply,
    make_instance,
    solve_linear,
    solve_nonlinear,
)
from cyllab.vfield import GradientField, LinearField, VectorFieldSequence
from conftest import TWO_PI, make_cylinder


def test_boundary_side_enforced():
    with pytest.raises(PreconditionError):
        SpectralBoundaryData(left={1: [1.0]})
    with pytest.raises(PreconditionError):
        SpectralBoundaryData(right={0: [1.0]})


def test_bdata_json_roundtrip():
    bd = SpectralBoundaryData(left={0: [0.1 + 0.2j], -2: [0.3]}, right={1: [0.4j]})
    back = SpectralBoundaryData.from_json_list(bd.to_json_list())
    for k in bd.left:
        assert np.allclose(back.left[k], bd.left[k])
    for k in bd.right:
        assert np.allclose(back.right[k], bd.right[k])


# -- linear solve --------------------------------------------------------------

def test_homogeneous_mode_closed_form():
    cyl = make_cylinder(r=2.0, s_per_unit=50, t_modes=8)
    a = 0.8 - 0.3j
    u = solve_linear(cyl, SpectralBoundaryData(right={1: [a]}))
    ml = list(cyl.modes)
    s = cyl.s_grid
    exact = a * np.exp(TWO_PI * (s - cyl.s_max))
    got = u.coeffs[:, ml.index(1), 0]
    assert np.max(np.abs(got - exact)) <= 1e-12 * np.abs(a)
    # value at the left circle: a e^{-4 pi (r+1)}
    assert got[0] == pytest.approx(a * np.exp(-2 * TWO_PI * (cyl.half_length + 1)),
                                   rel=1e-11)
    # all other modes stay zero
    others = np.delete(u.coeffs, ml.index(1), axis=1)
    assert np.max(np.abs(others)) == 0.0


def test_constant_forcing_zero_mode_quadrature():
    cyl = make_cylinder(r=1.0, s_per_unit=50, t_modes=8)
    c = 0.3 + 0.1j
    q0 = 0.2 - 0.4j
    f = SpectralField.from_mode_profiles(cyl, {0: lambda s: c * np.ones_like(s)[:, None]})
    u = solve_linear(cyl, SpectralBoundaryData(left={0: [q0]}), f)
    ml = list(cyl.modes)
    exact = q0 + c * (cyl.s_grid - cyl.s_min)
    assert np.max(np.abs(u.coeffs[:, ml.index(0), 0] - exact)) < 1e-13


def test_zero_data_zero_forcing_gives_zero():
    cyl = make_cylinder(r=1.0, s_per_unit=20, t_modes=8)
    u = solve_linear(cyl, SpectralBoundaryData(), SpectralField.zero(cyl))
    assert np.max(np.abs(u.coeffs)) == 0.0


def test_left_right_inverse_band_limited_forcing():
    cyl = Cylinder(half_length=2.0, s_samples=4097, t_modes=8, ambient_dim=1)
    s = cyl.s_grid

    def prof(w):
        return (0.1 * np.sin(w * s) * np.exp(-0.2 * s ** 2))[:, None]

    f = SpectralField.from_mode_profiles(cyl, {0: prof(0.7), 1: prof(1.1), -1: prof(0.4)})
    bd = SpectralBoundaryData(left={0: [0.1], -1: [0.05]}, right={1: [0.05]})
    u = solve_linear(cyl, bd, f)
    res = apply_delbar(u) - f
    sup = np.max(np.abs(res.to_physical(4 * cyl.t_modes)))
    assert sup <= 1e-8


def test_mode_split_stability_no_blowup():
    # band-edge modes on a long cylinder: conditioning stays O(1)
    cyl = Cylinder(half_length=50.0, s_samples=2001, t_modes=32, ambient_dim=1)
    bd = SpectralBoundaryData(left={-15: [1.0]}, right={16: [1.0]})
    u = solve_linear(cyl, bd)
    assert np.all(np.isfinite(u.coeffs.view(np.float64)))
    assert np.max(np.abs(u.coeffs)) <= 1.0 + 1e-12


def test_out_of_band_mode_rejected():
    cyl = make_cylinder(t_modes=8)
    with pytest.raises(BandError):
        solve_linear(cyl, SpectralBoundaryData(right={10: [1.0]}))


# -- nonlinear solve --------------------------------------------------------------

BD = SpectralBoundaryData(left={-1: [0.05], 0: [0.1]}, right={1: [0.05]})


def test_eps_zero_single_iteration():
    cyl = make_cylinder(r=1.0, s_per_unit=50, t_modes=8)
    u, rep = solve_nonlinear(cyl, BD, LinearField.scalar(0.5, 2), 0.0)
    href = solve_linear(cyl, BD)
    assert rep.iterations == 1
    assert np.array_equal(u.coeffs, href.coeffs)


def test_constant_field_particular_profile():
    cyl = make_cylinder(r=1.0, s_per_unit=100, t_modes=8)
    w = np.array([0.04, -0.02])
    eps = 0.05
    u, rep = solve_nonlinear(cyl, BD, LinearField.constant(w), eps)
    ml = list(cyl.modes)
    exact = 0.1 + eps * (w[0] + 1j * w[1]) * (cyl.s_grid - cyl.s_min)
    assert np.max(np.abs(u.coeffs[:, ml.index(0), 0] - exact)) < 1e-12
    assert rep.iterations <= 3
    assert rep.fixed_point_residual <= 1e-10


def test_linear_field_center_of_mass_exponential():
    cyl = make_cylinder(r=2.0, s_per_unit=100, t_modes=8)
    lam, eps = 0.5, 0.02
    u, rep = solve_nonlinear(cyl, BD, LinearField.scalar(lam, 2), eps)
    ml = list(cyl.modes)
    q = u.coeffs[:, ml.index(0), 0]
    exact = 0.1 * np.exp(eps * lam * (cyl.s_grid - cyl.s_min))
    assert np.max(np.abs(q - exact)) <= 1e-9 * np.max(np.abs(exact))
    assert rep.converged


def test_residual_history_monotone_after_first():
    cyl = make_cylinder(r=2.0, s_per_unit=60, t_modes=8)
    _, rep = solve_nonlinear(cyl, BD, LinearField.scalar(0.5, 2), 0.05)
    hist = rep.history
    assert all(b <= a * (1 + 1e-12) for a, b in zip(hist[1:], hist[2:]))


def test_boundary_coefficients_preserved():
    cyl = make_cylinder(r=1.0, s_per_unit=60, t_modes=8)
    u, _ = solve_nonlinear(cyl, BD, GradientField([0.5, 0.3]), 0.05)
    ml = list(cyl.modes)
    assert u.coeffs[0, ml.index(0), 0] == pytest.approx(0.1, abs=1e-14)
    assert u.coeffs[0, ml.index(-1), 0] == pytest.approx(0.05, abs=1e-14)
    assert u.coeffs[-1, ml.index(1), 0] == pytest.approx(0.05, abs=1e-14)


def test_contraction_precheck():
    cyl = make_cylinder(r=10.0, s_per_unit=10, t_modes=8)
    with pytest.raises(NoContractionError):
        solve_nonlinear(cyl, BD, LinearField.scalar(1.0, 2), 0.5)


def test_iteration_cap_raises():
    cyl = make_cylinder(r=2.0, s_per_unit=20, t_modes=8)
    with pytest.raises(NonConvergenceError):
        solve_nonlinear(cyl, BD, LinearField.scalar(0.5, 2), 0.05,
                        tol=1e-14, max_iter=2, accelerate=False)


def test_dealias_quadratic_exact():
    # quadratic nonlinearity evaluated on the doubled grid has no aliasing:
    # compare against a 4x-oversampled evaluation
    cyl = make_cylinder(r=1.0, s_per_unit=10, t_modes=8)
    u = SpectralField.from_mode_profiles(cyl, {
        1: lambda s: 0.3 * np.exp(TWO_PI * (s - cyl.s_max))[:, None],
        0: lambda s: 0.2 * np.ones_like(s)[:, None],
    })
    from cyllab.vfield import MonomialField
    model = MonomialField(2, (([1.0, 0.0], [2, 0]), ([0.0, 0.5], [0, 2])))
    a = dealias_apply(model, u, oversample=2)
    b = dealias_apply(model, u, oversample=4)
    assert np.max(np.abs(a.coeffs - b.coeffs)) < 1e-14


# -- instance generation -------------------------------------------------------------

SEQ = VectorFieldSequence(LinearField.scalar(0.5, 2), LinearField.constant([1e-3, 0.0]))


def test_make_instance_contract():
    bd = SpectralBoundaryData(left={-1: [0.1], 0: [0.1]}, right={1: [0.1]})
    u, rep = make_instance(10.0, 0.01, bd, SEQ, 1, samples_per_unit=384, t_modes=16)
    assert rep.final_residual <= 1e-8
    assert u.sup_norm() <= 1.0
    assert u.ball_constrained


def test_make_instance_ball_violation():
    bd = SpectralBoundaryData(right={1: [2.0]})
    with pytest.raises(BallViolationError):
        make_instance(2.0, 0.0, bd, SEQ, 1, samples_per_unit=32, t_modes=8)


def test_ball_safe_flag_enforced():
    cyl = make_cylinder(r=1.0, s_per_unit=20, t_modes=8)
    bd = SpectralBoundaryData(right={1: [1.5]}, ball_safe=True)
    with pytest.raises(BallViolationError):
        solve_nonlinear(cyl, bd, LinearField.scalar(0.1, 2), 0.0)
    ok = SpectralBoundaryData(right={1: [0.5]}, ball_safe=True)
    _, rep = solve_nonlinear(cyl, ok, LinearField.scalar(0.1, 2), 0.0)
    assert rep.converged


def test_make_instance_eps_zero_pure_holomorphic():
    bd = SpectralBoundaryData(right={1: [0.2]})
    u, rep = make_instance(2.0, 0.0, bd, SEQ, 1, samples_per_unit=64, t_modes=8)
    assert rep.iterations == 1
    ml = list(u.cylinder.modes)
    s = u.cylinder.s_grid
    exact = 0.2 * np.exp(TWO_PI * (s - u.cylinder.s_max))
    got = u.coeffs[:, ml.index(1), 0]
    assert np.max(np.abs(got - exact)) <= 1e-12
    others = np.delete(u.coeffs, ml.index(1), axis=1)
    assert np.max(np.abs(others)) == 0.0


def test_cubic_forcing_mode_closed_form():
    # for polynomial forcing p of degree 3 the marching quadrature is exact:
    # the particular solution of c' - mu c = p is the polynomial
    # q = -(p/mu + p'/mu^2 + p''/mu^3 + p'''/mu^4)
    cyl = make_cylinder(r=1.0, s_per_unit=40, t_modes=8)
    mu = TWO_PI
    p = np.polynomial.Polynomial([0.3, -0.5, 0.2, 0.4])
    f = SpectralField.from_mode_profiles(
        cyl, {1: lambda s: p(s)[:, None].astype(complex)})
    a = 0.7
    u = solve_linear(cyl, SpectralBoundaryData(right={1: [a]}), f)
    q = -(p / mu + p.deriv(1) / mu ** 2 + p.deriv(2) / mu ** 3
          + p.deriv(3) / mu ** 4)
    s = cyl.s_grid
    exact = q(s) + np.exp(mu * (s - cyl.s_max)) * (a - q(cyl.s_max))
    got = u.coeffs[:, list(cyl.modes).index(1), 0]
    assert np.max(np.abs(got - exact)) <= 1e-12 * np.max(np.abs(exact))


def test_band_edge_mode_solve():
    cyl = make_cylinder(r=1.0, s_per_unit=50, t_modes=8)
    u = solve_linear(cyl, SpectralBoundaryData(right={4: [0.5]}))
    ml = list(cyl.modes)
    s = cyl.s_grid
    exact = 0.5 * np.exp(TWO_PI * 4 * (s - cyl.s_max))
    got = u.coeffs[:, ml.index(4), 0]
    assert np.max(np.abs(got - exact)) <= 1e-12
