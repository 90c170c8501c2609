import math
import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from willmore_flow.errors import ConfigurationError, StateError
from willmore_flow.grid import (BoundaryData, ScalarField, apply_clamped_ghosts, check_compatibility,
                                diff, dumps_field, integrate, loads_field, make_grid)

from conftest import random_field


def test_make_grid_spacing():
    assert make_grid((0, 1, 0, 1), 9, 9).h == 0.1
    assert make_grid((0, 2, 0, 1), 19, 9).h == 0.1
    d = make_grid((0, 1, 0, 1), 9, 9)
    assert d.shape == (15, 15)
    assert d.ghost == 2


def test_make_grid_rejects_bad_input():
    with pytest.raises(ConfigurationError):
        make_grid((0, 1, 0, 2), 9, 9)
    with pytest.raises(ConfigurationError):
        make_grid((0, 1, 0, 1), 4, 9)
    with pytest.raises(ConfigurationError):
        make_grid((1, 0, 0, 1), 9, 9)


def test_coordinates_reproducible():
    a, b = make_grid((0, 1, 0, 1), 17, 17), make_grid((0, 1, 0, 1), 17, 17)
    assert np.array_equal(a.x, b.x) and np.array_equal(a.y, b.y)
    assert a.x[a.ghost] == 0.0


@pytest.mark.parametrize("f,beta,expected", [
    (lambda X, Y: X ** 2, (2, 0), 2.0),
    (lambda X, Y: X * Y, (1, 1), 1.0),
    (lambda X, Y: X ** 4, (4, 0), 24.0),
    (lambda X, Y: X ** 2 * Y ** 2, (2, 2), 4.0),
    (lambda X, Y: X ** 3 * Y, (3, 1), 6.0),
    (lambda X, Y: Y ** 3, (0, 3), 6.0),
])
def test_diff_polynomial_exactness(f, beta, expected):
    d = make_grid((0, 1, 0, 1), 9, 9)
    out = diff(ScalarField.from_function(d, f), beta).interior
    assert np.max(np.abs(out - expected)) < 1e-9


@settings(max_examples=40, deadline=None)
@given(coef=st.lists(st.floats(-2, 2), min_size=36, max_size=36),
       k=st.integers(0, 4), l=st.integers(0, 4))
def test_diff_exact_on_tensor_polynomials(coef, k, l):
    # Centered stencils for d^k are exact on polynomials of degree <= k + 1 in that variable.
    if k + l > 4:
        return
    d = make_grid((0, 1, 0, 1), 7, 7)
    c = np.array(coef).reshape(6, 6)
    terms = [(i, j) for i in range(k + 2) for j in range(l + 2)]

    def f(X, Y):
        return sum(c[i, j] * X ** i * Y ** j for i, j in terms)

    def exact(X, Y):
        v = np.zeros_like(X)
        for i, j in terms:
            if i >= k and j >= l:
                v += c[i, j] * math.perm(i, k) * math.perm(j, l) * X ** (i - k) * Y ** (j - l)
        return v

    X, Y = d.mesh()
    err = np.abs(diff(ScalarField.from_function(d, f), (k, l)).interior - exact(X, Y)[d.interior])
    assert err.max() < 1e-7


def test_diff_commutes(rng):
    from willmore_flow.grid import diff_array

    d = make_grid((0, 1, 0, 1), 17, 17)
    u = random_field(d, rng)
    nested = diff_array(diff_array(u.values, 1, 0, d.h), 0, 1, d.h)[d.interior]
    direct = diff(u, (1, 1)).interior
    assert np.max(np.abs(nested - direct)) <= 1e-10 * np.max(np.abs(direct))


@pytest.mark.parametrize("beta", [(1, 0), (2, 0), (1, 1), (3, 0), (2, 2), (4, 0)])
def test_diff_second_order_convergence(beta):
    def f(X, Y):
        return np.exp(0.7 * X) * np.sin(1.3 * Y + 0.2)

    k, l = beta
    errs = []
    for n in (15, 31, 63):
        d = make_grid((0, 1, 0, 1), n, n)
        X, Y = d.mesh()
        exact = 0.7 ** k * 1.3 ** l * np.exp(0.7 * X) * np.sin(1.3 * Y + 0.2 + l * np.pi / 2)
        errs.append(np.max(np.abs(diff(ScalarField.from_function(d, f), beta).interior - exact[d.interior])))
    ratios = [errs[i] / errs[i + 1] for i in range(2)]
    assert all(3.5 < r < 4.5 for r in ratios), ratios


def test_diff_requires_ghosts():
    d = make_grid((0, 1, 0, 1), 9, 9)
    u = ScalarField.from_function(d, lambda X, Y: X * Y, region="closure")
    assert np.all(np.isfinite(diff(u, (2, 0)).interior))  # reach 1 stays inside the closure
    with pytest.raises(StateError):
        diff(u, (4, 0))
    with pytest.raises(ValueError):
        diff(u, (3, 2))


def test_ghosts_zero_data():
    d = make_grid((0, 1, 0, 1), 9, 9)
    u = apply_clamped_ghosts(ScalarField.zeros(d), BoundaryData.zero(d))
    assert np.all(u.values == 0.0)


def test_ghosts_linear_extension_exact():
    d = make_grid((0, 1, 0, 1), 9, 9)
    bc = BoundaryData.from_functions(d, lambda X, Y: X, lambda X, Y: (np.ones_like(X), np.zeros_like(X)))
    u = apply_clamped_ghosts(ScalarField.from_function(d, lambda X, Y: X, region="closure"), bc)
    X, _ = d.mesh()
    assert np.max(np.abs(u.values - X)) < 1e-13


def test_ghosts_quadratic_extension():
    for n in (9, 19, 39):
        d = make_grid((0, 1, 0, 1), n, n)
        bc = BoundaryData.from_functions(d, lambda X, Y: X ** 2, lambda X, Y: (2 * X, np.zeros_like(X)))
        u = apply_clamped_ghosts(ScalarField.from_function(d, lambda X, Y: X ** 2, region="closure"), bc)
        X, _ = d.mesh()
        assert np.max(np.abs(u.values - X ** 2)) < 1e-12


def test_ghosts_smooth_function_order():
    def f(X, Y):
        return np.exp(X) * np.cos(2 * Y)

    def g(X, Y):
        return np.exp(X) * np.cos(2 * Y), -2 * np.exp(X) * np.sin(2 * Y)

    errs = []
    for n in (15, 31, 63):
        d = make_grid((0, 1, 0, 1), n, n)
        u = apply_clamped_ghosts(ScalarField.from_function(d, f, region="closure"), BoundaryData.from_functions(d, f, g))
        X, Y = d.mesh()
        # first ghost layer away from corners
        s = d.ghost
        errs.append(np.max(np.abs(u.values[s + 1:-s - 1, s - 1] - f(X, Y)[s + 1:-s - 1, s - 1])))
    assert errs[0] / errs[1] > 7 and errs[1] / errs[2] > 7  # third order per node


def test_ghosts_idempotent(rng):
    d = make_grid((0, 1, 0, 1), 11, 11)
    u = random_field(d, rng)
    bc = BoundaryData.from_field(u)
    once = apply_clamped_ghosts(u, bc)
    twice = apply_clamped_ghosts(once, bc)
    assert np.array_equal(once.values, twice.values)


def test_ghost_fill_does_not_mutate(rng):
    d = make_grid((0, 1, 0, 1), 11, 11)
    u = random_field(d, rng)
    before = u.values.copy()
    apply_clamped_ghosts(u, BoundaryData.zero(d))
    assert np.array_equal(before, u.values)


def test_field_rejects_nonfinite_interior():
    d = make_grid((0, 1, 0, 1), 5, 5)
    a = np.zeros(d.shape)
    a[4, 4] = np.nan  # an interior node
    with pytest.raises(StateError):
        ScalarField(d, a)


def test_field_algebra_requires_same_domain():
    a = ScalarField.zeros(make_grid((0, 1, 0, 1), 9, 9))
    b = ScalarField.zeros(make_grid((0, 1, 0, 1), 11, 11))
    with pytest.raises(ConfigurationError):
        a + b


def test_compatibility_zero():
    d = make_grid((0, 1, 0, 1), 9, 9)
    rep = check_compatibility(apply_clamped_ghosts(ScalarField.zeros(d), BoundaryData.zero(d)),
                              BoundaryData.zero(d), fourth_order=True)
    assert rep.passed and rep.trace_residual == 0 and rep.normal_residual == 0
    assert rep.fourth_order_residual == 0


def test_compatibility_wrong_slope():
    d = make_grid((0, 1, 0, 1), 9, 9)
    bc = BoundaryData.from_functions(d, lambda X, Y: X, lambda X, Y: (np.zeros_like(X), np.zeros_like(X)))
    u0 = ScalarField.from_function(d, lambda X, Y: X)
    rep = check_compatibility(u0, bc)
    assert not rep.passed
    assert rep.trace_residual < 1e-14
    assert abs(rep.normal_residual - 1.0) < 1e-12


def test_compatibility_clamped_bump_reports_ucc():
    from willmore_flow.presets import make_preset

    d = make_grid((0, 1, 0, 1), 33, 33)
    p = make_preset("clamped_bump", d, amplitude=0.01)
    bc = p.boundary(d)
    rep = check_compatibility(apply_clamped_ghosts(p.field(d), bc), bc, fourth_order=True)
    assert rep.passed
    assert rep.fourth_order_residual > 1e-3
    assert rep.fourth_order_passed is False


def test_integrate_exact_for_bilinear():
    d = make_grid((0, 2, 0, 1), 19, 9)
    X, Y = d.mesh()
    assert math.isclose(integrate(d, (X * Y)[d.closure]), 1.0, rel_tol=1e-13)
    assert math.isclose(integrate(d, np.ones((d.ny + 2, d.nx + 2))), 2.0, rel_tol=1e-14)


def test_wgf1_roundtrip(rng):
    d = make_grid((0, 2, -1, 0), 19, 9)
    u = random_field(d, rng).with_time(0.125)
    blob = dumps_field(u)
    assert blob[:4] == b"WGF1"
    nx, ny, x0, x1, y0, y1, t = struct.unpack_from("<II5d", blob, 4)
    assert (nx, ny, x0, x1, y0, y1, t) == (19, 9, 0.0, 2.0, -1.0, 0.0, 0.125)
    assert len(blob) == 4 + 8 + 40 + 8 * 19 * 9
    v = loads_field(blob)
    assert np.array_equal(v.interior, u.interior)
    assert v.time == 0.125
    assert dumps_field(v) == blob


def test_wgf1_rejects_garbage():
    with pytest.raises(ConfigurationError):
        loads_field(b"nope" + bytes(60))
