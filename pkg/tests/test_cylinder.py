"""Grid geometry, spectral calculus, norms, and the Poincare check."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cyllab.cylinder import (
    Cylinder,
    SpectralField,
    Window,
    apply_delbar,
    poincare_check,
    sup_derivative_norm,
    window_sobolev_sq,
)
from cyllab.errors import (
    BandError,
    InvalidGridError,
    OutOfWindowError,
    PreconditionError,
)
from conftest import TWO_PI, dt_loop_norm_sq_oracle, loop_norm_sq_oracle, make_cylinder


# -- grid invariants ----------------------------------------------------------

def test_grid_basics():
    cyl = Cylinder(half_length=2.0, s_samples=601, t_modes=16, ambient_dim=2)
    assert cyl.s_min == -3.0 and cyl.s_max == 3.0
    assert np.isclose(cyl.h, 6.0 / 600)
    assert cyl.modes[0] == -7 and cyl.modes[-1] == 8
    assert len(cyl.modes) == 16


@pytest.mark.parametrize("kwargs", [
    dict(half_length=-1.0, s_samples=100, t_modes=8),
    dict(half_length=1.0, s_samples=100, t_modes=7),
    dict(half_length=1.0, s_samples=5, t_modes=8),
    dict(half_length=0.01, s_samples=9, t_modes=8),   # interior too thin
    dict(half_length=1.0, s_samples=100, t_modes=8, ambient_dim=0),
])
def test_invalid_grids_rejected(kwargs):
    with pytest.raises(InvalidGridError):
        Cylinder(**kwargs)


def test_mode_outside_band_rejected():
    cyl = make_cylinder(t_modes=8)
    with pytest.raises(BandError):
        SpectralField.from_mode_profiles(cyl, {5: 1.0})


# -- transforms / Parseval ------------------------------------------------------

def test_physical_roundtrip(rng):
    cyl = make_cylinder(r=1.0, s_per_unit=20, t_modes=8, dim=2)
    coeffs = rng.standard_normal((cyl.s_samples, 8, 2)) \
        + 1j * rng.standard_normal((cyl.s_samples, 8, 2))
    u = SpectralField(cyl, coeffs)
    back = SpectralField.from_physical(cyl, u.to_physical(16))
    assert np.max(np.abs(back.coeffs - u.coeffs)) < 1e-13


@settings(max_examples=25, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_parseval_consistency(seed):
    """Coefficient sums agree with physical-space quadrature to 1e-12."""
    g = np.random.default_rng(seed)
    cyl = Cylinder(half_length=1.0, s_samples=41, t_modes=8, ambient_dim=1)
    coeffs = g.standard_normal((41, 8, 1)) + 1j * g.standard_normal((41, 8, 1))
    u = SpectralField(cyl, coeffs)
    idx = int(g.integers(0, 41))
    parseval = u.circle_norm_sq()[idx]
    quad = loop_norm_sq_oracle(u, idx)
    assert abs(parseval - quad) <= 1e-12 * max(parseval, 1.0)


def test_dt_norm_matches_quadrature(rng):
    cyl = make_cylinder(r=1.0, s_per_unit=10, t_modes=8)
    coeffs = rng.standard_normal((cyl.s_samples, 8, 1)) \
        + 1j * rng.standard_normal((cyl.s_samples, 8, 1))
    u = SpectralField(cyl, coeffs)
    got = u.circle_norm_sq(dt_order=1)[3]
    ref = dt_loop_norm_sq_oracle(u, 3)
    assert abs(got - ref) <= 1e-5 * max(ref, 1.0)


# -- apply_delbar ---------------------------------------------------------------

def test_delbar_kills_holomorphic_mode():
    cyl = make_cylinder(r=1.0, s_per_unit=200, t_modes=8)
    u = SpectralField.from_mode_profiles(
        cyl, {1: lambda s: np.exp(TWO_PI * s)[:, None]})
    res = apply_delbar(u)
    scale = np.exp(TWO_PI * cyl.s_max)
    # 4th-order stencil: error ~ h^4 (2 pi)^5 / 5 relative at the edge rows
    budget = 3.0 * cyl.h ** 4 * TWO_PI ** 5 / 5.0
    assert np.max(np.abs(res.coeffs)) <= budget * scale


def test_delbar_annihilates_holomorphic_combination_at_stencil_order():
    amps = {1: 0.3, 2: -0.2 + 0.1j, 0: 0.5}
    errs = []
    for spu in (100, 200):
        cyl = make_cylinder(r=1.0, s_per_unit=spu, t_modes=8)
        profiles = {k: (lambda s, k=k, a=a: a * np.exp(TWO_PI * k * s)[:, None])
                    for k, a in amps.items()}
        u = SpectralField.from_mode_profiles(cyl, profiles)
        res = apply_delbar(u)
        errs.append(np.max(np.abs(res.coeffs)) / np.exp(2 * TWO_PI * cyl.s_max))
    order = np.log2(errs[0] / errs[1])
    assert 3.5 <= order <= 4.5


def test_delbar_zero_mode_linear_profile():
    cyl = make_cylinder(r=1.0, s_per_unit=50, t_modes=8)
    u = SpectralField.from_mode_profiles(cyl, {0: lambda s: s[:, None]})
    res = apply_delbar(u)
    ml = list(cyl.modes)
    expected = np.zeros_like(res.coeffs)
    expected[:, ml.index(0), 0] = 1.0
    assert np.max(np.abs(res.coeffs - expected)) < 1e-10


def test_delbar_antiholomorphic_mode():
    # u = e^{2 pi (s - i t)}: both terms add, giving 4 pi u
    cyl = make_cylinder(r=1.0, s_per_unit=300, t_modes=8)
    u = SpectralField.from_mode_profiles(
        cyl, {-1: lambda s: np.exp(TWO_PI * s)[:, None]})
    res = apply_delbar(u)
    ml = list(cyl.modes)
    expected = 2.0 * TWO_PI * u.coeffs[:, ml.index(-1), 0]
    got = res.coeffs[:, ml.index(-1), 0]
    assert np.max(np.abs(got - expected)) <= 1e-6 * np.max(np.abs(expected))


# -- sup_derivative_norm ----------------------------------------------------------

def test_sup_norm_constant_field():
    cyl = make_cylinder(r=1.0, s_per_unit=20, t_modes=8, dim=2)
    c = np.array([0.3 + 0.4j, 0.1])
    u = SpectralField.from_mode_profiles(cyl, {0: np.tile(c, (cyl.s_samples, 1))})
    w = Window(0.0, 0.5)
    assert np.isclose(sup_derivative_norm(u, 0, w), np.linalg.norm(c))
    assert sup_derivative_norm(u, 1, w) < 1e-10


def test_sup_gradient_single_mode():
    # |grad u| for e^{2 pi (s + it)} is 2 pi sqrt(2) e^{2 pi s}
    cyl = make_cylinder(r=1.5, s_per_unit=200, t_modes=8)
    u = SpectralField.from_mode_profiles(
        cyl, {1: lambda s: np.exp(TWO_PI * s)[:, None]})
    got = sup_derivative_norm(u, 1, Window(0.0, 1.0))
    expected = TWO_PI * np.sqrt(2.0) * np.exp(TWO_PI)
    assert abs(got - expected) <= 1e-5 * expected


def test_sup_derivative_region_must_stay_interior():
    cyl = make_cylinder(r=1.0, s_per_unit=20, t_modes=8)
    u = SpectralField.zero(cyl)
    with pytest.raises(OutOfWindowError):
        sup_derivative_norm(u, 0, Window(1.0, 0.5))   # touches the collar
    with pytest.raises(PreconditionError):
        sup_derivative_norm(u, 5, Window(0.0, 0.5))


# -- window_sobolev_sq -------------------------------------------------------------

def test_window_sobolev_zero_field():
    cyl = make_cylinder()
    assert window_sobolev_sq(SpectralField.zero(cyl), Window(0.0, 0.5)) == 0.0


def test_window_sobolev_flat_mode_closed_form():
    cyl = make_cylinder(r=1.0, s_per_unit=100, t_modes=8)
    a = 0.7 - 0.2j
    u = SpectralField.from_mode_profiles(
        cyl, {1: lambda s: a * np.ones_like(s)[:, None]})
    got = window_sobolev_sq(u, Window(0.25, 0.5), include_derivs=True)
    expected = (1.0 + 4.0 * np.pi ** 2) * abs(a) ** 2
    assert abs(got - expected) <= 1e-10 * expected


def test_window_sobolev_exponential_closed_form():
    cyl = make_cylinder(r=1.0, s_per_unit=400, t_modes=8)
    a = 0.9
    u = SpectralField.from_mode_profiles(
        cyl, {1: lambda s: a * np.exp(TWO_PI * s)[:, None]})
    got = window_sobolev_sq(u, Window(0.0, 0.5), include_derivs=False)
    expected = a ** 2 * (np.exp(TWO_PI) - np.exp(-TWO_PI)) / (2.0 * TWO_PI)
    # trapezoid rule: O(h^2) with the (4 pi)^2 curvature of e^{4 pi s}
    assert abs(got - expected) <= 1e-4 * expected


def test_window_additivity_at_shared_endpoint(rng):
    cyl = make_cylinder(r=1.0, s_per_unit=64, t_modes=8)
    coeffs = rng.standard_normal((cyl.s_samples, 8, 1)) \
        + 1j * rng.standard_normal((cyl.s_samples, 8, 1))
    u = SpectralField(cyl, coeffs)
    whole = window_sobolev_sq(u, Window(0.0, 1.0))
    left = window_sobolev_sq(u, Window(-0.5, 0.5))
    right = window_sobolev_sq(u, Window(0.5, 0.5))
    assert abs(whole - (left + right)) <= 1e-12 * whole


def test_window_outside_domain_rejected():
    cyl = make_cylinder()
    with pytest.raises(OutOfWindowError):
        window_sobolev_sq(SpectralField.zero(cyl), Window(2.0, 0.5))


# -- poincare ---------------------------------------------------------------------

def test_poincare_equality_first_mode():
    lhs, rhs = poincare_check(np.array([1]), np.array([1.0 + 0j]))
    assert lhs == pytest.approx(1.0, abs=1e-15)
    assert rhs == pytest.approx(1.0, abs=1e-15)


def test_poincare_second_mode_strict():
    lhs, rhs = poincare_check(np.array([2]), np.array([1.0 + 0j]))
    assert (lhs, rhs) == (pytest.approx(1.0), pytest.approx(4.0))


def test_poincare_zero_loop():
    lhs, rhs = poincare_check(np.array([1]), np.array([0.0 + 0j]))
    assert (lhs, rhs) == (0.0, 0.0)


def test_poincare_rejects_nonzero_mean():
    with pytest.raises(PreconditionError):
        poincare_check(np.array([0, 1]), np.array([1.0 + 0j, 1.0 + 0j]))


@settings(max_examples=40, deadline=None)
@given(st.integers(min_value=0, max_value=10 ** 6))
def test_poincare_inequality_random_loops(seed):
    """lhs <= rhs for every mean-zero band-limited loop, equality only on
    the span of modes +-1."""
    g = np.random.default_rng(seed)
    modes = np.arange(-3, 5)
    coeffs = g.standard_normal((8, 2)) + 1j * g.standard_normal((8, 2))
    coeffs[modes == 0] = 0.0
    lhs, rhs = poincare_check(modes, coeffs)
    assert lhs <= rhs * (1 + 1e-12)
    outside = np.abs(modes) != 1
    if np.sum(np.abs(coeffs[outside]) ** 2) > 1e-12:
        assert lhs < rhs


# -- evaluation --------------------------------------------------------------------

def test_evaluate_matches_collocation(rng):
    cyl = make_cylinder(r=1.0, s_per_unit=40, t_modes=8)
    coeffs = rng.standard_normal((cyl.s_samples, 8, 1)) \
        + 1j * rng.standard_normal((cyl.s_samples, 8, 1))
    u = SpectralField(cyl, coeffs)
    t = np.arange(8) / 8
    vals = u.evaluate(cyl.s_grid[5], t)[0]
    ref = u.to_physical()[5]
    assert np.max(np.abs(vals - ref)) < 1e-12


def test_band_edge_mode_roundtrip():
    # mode k = T/2 sits on the fft fold; transforms must stay consistent
    cyl = make_cylinder(r=1.0, s_per_unit=10, t_modes=8)
    u = SpectralField.from_mode_profiles(
        cyl, {4: lambda s: 0.3 * np.ones_like(s)[:, None]})
    back = SpectralField.from_physical(cyl, u.to_physical(16))
    assert np.max(np.abs(back.coeffs - u.coeffs)) < 1e-14
    assert u.circle_norm_sq()[0] == pytest.approx(0.09, rel=1e-12)


def test_diff_s_needs_enough_samples():
    from cyllab.cylinder import diff_s
    with pytest.raises(InvalidGridError):
        diff_s(np.zeros((4, 2)), 0.1, 1)
    with pytest.raises(InvalidGridError):
        diff_s(np.zeros((5, 2)), 0.1, 2)
