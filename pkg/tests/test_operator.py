import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from willmore_flow.grid import BoundaryData, ScalarField, apply_clamped_ghosts, make_grid
from willmore_flow.operator import (biharmonic, coeffs_from_gradient, cubic_smallness_check,
                                    ellipticity_check, principal_apply, principal_coeffs, quartic_form,
                                    remainder, remainder_bound_ratio, rhs_bundle, rhs_divergence,
                                    rhs_geometric, unit_directions)
from willmore_flow.presets import make_preset

from conftest import random_field

ORDER = ((4, 0), (3, 1), (2, 2), (1, 3), (0, 4))


def _c(ux, uy):
    L = coeffs_from_gradient(np.float64(ux), np.float64(uy))
    return tuple(float(L[b]) for b in ORDER)


def test_coefficients_flat():
    assert _c(0, 0) == (1.0, 0.0, 2.0, 0.0, 1.0)


def test_coefficients_unit_slope():
    assert _c(1, 0) == pytest.approx((0.25, 0.0, 1.0, 0.0, 1.0), abs=1e-15)


@settings(max_examples=60, deadline=None)
@given(ux=st.floats(-5, 5), uy=st.floats(-5, 5))
def test_coefficients_swap_symmetry(ux, uy):
    a, b = _c(ux, uy), _c(uy, ux)
    assert a[0] == pytest.approx(b[4]) and a[4] == pytest.approx(b[0])
    assert a[1] == pytest.approx(b[3], abs=1e-14) and a[2] == pytest.approx(b[2])


@settings(max_examples=80, deadline=None)
@given(ux=st.floats(-4, 4), uy=st.floats(-4, 4), th=st.floats(0, np.pi))
def test_quartic_form_is_squared_projected_metric(ux, uy, th):
    # L(xi) = ((1 + |p|^2)|xi|^2 - (p.xi)^2)^2 / (1 + |p|^2)^2 for p = grad u
    L = coeffs_from_gradient(np.float64(ux), np.float64(uy))
    x1, x2 = np.cos(th), np.sin(th)
    q2 = 1 + ux * ux + uy * uy
    ref = (q2 - (ux * x1 + uy * x2) ** 2) ** 2 / q2 ** 2
    assert quartic_form(L, x1, x2) == pytest.approx(ref, rel=1e-12, abs=1e-14)
    assert 1 / q2 ** 2 - 1e-12 <= ref <= 4.0


def _flat_coeffs(d):
    return principal_coeffs(apply_clamped_ghosts(ScalarField.zeros(d), BoundaryData.zero(d)))


@pytest.mark.parametrize("f,expected", [(lambda X, Y: X ** 4, 24.0), (lambda X, Y: X ** 2 * Y ** 2, 8.0),
                                        (lambda X, Y: Y ** 4 + X ** 3 * Y, 24.0)])
def test_principal_apply_on_flat_coefficients(f, expected):
    d = make_grid((0, 1, 0, 1), 9, 9)
    out = principal_apply(_flat_coeffs(d), ScalarField.from_function(d, f)).interior
    assert np.max(np.abs(out - expected)) < 1e-8


def test_principal_apply_flat_is_biharmonic(rng):
    d = make_grid((0, 1, 0, 1), 17, 17)
    u = random_field(d, rng)
    a = principal_apply(_flat_coeffs(d), u).interior
    b = biharmonic(u).interior
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(b))


def test_ellipticity_on_random_fields(rng):
    d = make_grid((0, 1, 0, 1), 17, 17)
    xi = unit_directions(64)
    for _ in range(20):
        u = random_field(d, rng, grad_max=rng.uniform(0.0, 3.0))
        rep = ellipticity_check(principal_coeffs(u), xi)
        assert rep.passed and rep.violations == 0
        assert rep.form_max <= 1.0 + 1e-12


def test_ellipticity_flat_field():
    d = make_grid((0, 1, 0, 1), 9, 9)
    rep = ellipticity_check(_flat_coeffs(d), unit_directions(16))
    assert rep.lower == 1.0 and rep.form_min == pytest.approx(1.0) and rep.form_max == pytest.approx(1.0)


def test_ellipticity_rejects_non_unit_directions():
    d = make_grid((0, 1, 0, 1), 9, 9)
    with pytest.raises(ValueError):
        ellipticity_check(_flat_coeffs(d), [[1.0, 1.0]])


def test_split_identity_is_exact(rng):
    d = make_grid((0, 1, 0, 1), 17, 17)
    for g in (0.1, 1.0, 2.0):
        b = rhs_bundle(random_field(d, rng, grad_max=g))
        P, R = b.split
        gap = np.max(np.abs(b.geometric.interior + P.interior + R.interior))
        assert gap <= 1e-13 * np.max(np.abs(P.interior))


def test_divergence_form_converges_to_geometric():
    def f(X, Y):
        return 0.4 * np.sin(1.3 * X + 0.2) * np.cos(0.9 * Y) + 0.1 * X * Y ** 2

    errs = []
    for n in (15, 31, 63):
        d = make_grid((0, 1, 0, 1), n, n)
        u = ScalarField.from_function(d, f)
        errs.append(np.max(np.abs(rhs_divergence(u).interior - rhs_geometric(u).interior)))
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0


def test_remainder_ignores_fourth_derivatives(rng):
    # Adding c (x - x0)^4 changes D^4 by 24c at x0 but D^2 only by 2ch^2 and D^3 not at all.
    d = make_grid((0, 1, 0, 1), 33, 33)
    u = random_field(d, rng, grad_max=1.0)
    X, Y = d.mesh()
    x0 = d.x[d.ghost + 16]
    v = u + ScalarField(d, 50.0 * (X - x0) ** 4)
    node = (d.ghost + 16, d.ghost + 16)
    dR = abs(remainder(v).values[node] - remainder(u).values[node])
    dP = abs(principal_apply(principal_coeffs(v), v).values[node]
             - principal_apply(principal_coeffs(u), u).values[node])
    assert dP > 100.0
    assert dR < 1e-2 * dP


def test_remainder_bound_ratio_zero_field():
    d = make_grid((0, 1, 0, 1), 9, 9)
    assert remainder_bound_ratio(apply_clamped_ghosts(ScalarField.zeros(d), BoundaryData.zero(d))) == 0.0


def test_rhs_invariant_under_vertical_shift(rng):
    d = make_grid((0, 1, 0, 1), 17, 17)
    u = random_field(d, rng, grad_max=1.0)
    a, b = rhs_geometric(u).interior, rhs_geometric(u + 3.0).interior
    assert np.max(np.abs(a - b)) <= 1e-9 * np.max(np.abs(a))


def test_rhs_of_plane_vanishes():
    d = make_grid((0, 1, 0, 1), 9, 9)
    u = ScalarField.from_function(d, lambda X, Y: 0.3 * X - 0.2 * Y + 0.1)
    assert np.max(np.abs(rhs_geometric(u).interior)) < 1e-9


def test_sphere_cap_is_stationary_to_second_order():
    errs = []
    for n in (15, 31, 63):
        d = make_grid((0, 1, 0, 1), n, n)
        errs.append(np.max(np.abs(rhs_geometric(make_preset("cap", d, radius=2.0).field(d)).interior)))
    assert errs[0] / errs[1] > 3.0 and errs[1] / errs[2] > 3.0


def test_cubic_smallness_of_the_nonlinearity():
    d = make_grid((0, 1, 0, 1), 33, 33)
    p = make_preset("gaussian", d, amplitude=1.0, width=0.3)
    u = apply_clamped_ghosts(p.field(d), p.boundary(d))
    rep = cubic_smallness_check(u, np.geomspace(1e-3, 1e-1, 9))
    assert rep.passed and rep.slope == pytest.approx(3.0, abs=0.02)


def test_cubic_smallness_zero_is_exact():
    d = make_grid((0, 1, 0, 1), 9, 9)
    u = apply_clamped_ghosts(ScalarField.zeros(d), BoundaryData.zero(d))
    rep = cubic_smallness_check(u, (0.0, 0.1, 1.0))
    assert rep.exact_zero and rep.passed
