import numpy as np
import pytest

from willmore_flow.errors import ConfigurationError, NonConvergenceError
from willmore_flow.flow import FlowState, cfl_dt, step_explicit
from willmore_flow.grid import BoundaryData, ScalarField, apply_clamped_ghosts, make_grid
from willmore_flow.presets import make_preset
from willmore_flow.stationary import NewtonConfig, history_csv, residual_stationary, solve_stationary


def _gaussian_problem(n=17, amplitude=1e-2):
    d = make_grid((0, 1, 0, 1), n, n)
    p = make_preset("gaussian", d, amplitude=amplitude, width=0.4)
    u0 = apply_clamped_ghosts(p.field(d), p.boundary(d))
    return d, u0, BoundaryData.from_field(u0)


def test_config_validation():
    for kw in ({"tol": 0}, {"damping": 0}, {"damping": 1.5}, {"max_iters": 0}, {"fd_eps": -1}):
        with pytest.raises(ConfigurationError):
            NewtonConfig(**kw)


def test_zero_data_needs_no_iterations():
    d = make_grid((0, 1, 0, 1), 9, 9)
    u, hist = solve_stationary(BoundaryData.zero(d), ScalarField.zeros(d), return_history=True)
    assert np.all(u.values == 0) and hist == [(0, 0.0, 0.0)]


def test_plane_is_its_own_solution():
    d = make_grid((0, 1, 0, 1), 9, 9)
    p = make_preset("plane", d, a=0.3, b=-0.2, c=0.1)
    u = solve_stationary(p.boundary(d), p.field(d))
    assert np.max(np.abs(u.interior - p.field(d).interior)) < 1e-12


def test_small_data_converges_quadratically():
    d, u0, bc = _gaussian_problem()
    u, hist = solve_stationary(bc, u0, NewtonConfig(tol=1e-11), return_history=True)
    res = [r for _, r, _ in hist]
    assert res[-1] < 1e-11
    assert all(s == 1.0 for _, _, s in hist[1:])
    # quadratic tail: r_{k+1} / r_k^2 stays bounded while r_k falls by orders of magnitude
    assert len(res) >= 3
    assert res[-1] < 1e-2 * res[-2]
    assert np.max(np.abs(residual_stationary(u, bc).interior)) < 1e-11


def test_solution_is_a_fixed_point_of_the_flow():
    d, u0, bc = _gaussian_problem()
    tol = 1e-10
    u = solve_stationary(bc, u0, NewtonConfig(tol=tol))
    dt = cfl_dt(d)
    v = step_explicit(FlowState(u), bc, dt).u
    assert np.max(np.abs(v.interior - u.interior)) <= 10 * dt * tol


def test_two_starting_points_agree():
    d, u0, bc = _gaussian_problem()
    cfg = NewtonConfig(tol=1e-11)
    a = solve_stationary(bc, u0, cfg)
    flat = ScalarField.from_interior(d, np.zeros((d.ny, d.nx)))
    b = solve_stationary(bc, flat, cfg)
    assert np.max(np.abs(a.interior - b.interior)) < 1e-10


def test_nonconvergence_reports_history():
    d, u0, bc = _gaussian_problem()
    flat = ScalarField.from_interior(d, np.zeros((d.ny, d.nx)))
    with pytest.raises(NonConvergenceError) as info:
        solve_stationary(bc, flat, NewtonConfig(max_iters=1, tol=1e-14))
    hist = info.value.history
    assert len(hist) == 2 and hist[0][0] == 0


def test_mismatched_grids_rejected():
    d, u0, bc = _gaussian_problem()
    with pytest.raises(ConfigurationError):
        solve_stationary(bc, ScalarField.zeros(make_grid((0, 1, 0, 1), 9, 9)))


def test_history_csv():
    text = history_csv([(0, 1.0, 0.0), (1, 0.25, 1.0)])
    assert text.splitlines() == ["iter,res_inf,step_fraction", "0,1,0", "1,0.25,1"]
