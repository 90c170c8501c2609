import math

import numpy as np
import pytest

from willmore_flow.errors import BlowUpError, CompatibilityError, ConfigurationError
from willmore_flow.flow import (DIAG_COLUMNS, FlowConfig, FlowState, cfl_dt, convergence_fit,
                                dissipation_probe, frozen_system, run, step_explicit, step_frozen)
from willmore_flow.geometry import willmore_energy
from willmore_flow.grid import BoundaryData, ScalarField, apply_clamped_ghosts, make_grid
from willmore_flow.operator import biharmonic
from willmore_flow.presets import make_preset


def _bump(n=17, amplitude=1e-2, width=0.3):
    d = make_grid((0, 1, 0, 1), n, n)
    bc = BoundaryData.zero(d)
    return d, apply_clamped_ghosts(make_preset("bump", d, amplitude=amplitude, width=width).field(d), bc), bc


def test_config_validation():
    with pytest.raises(ConfigurationError):
        FlowConfig(t_end=1.0, scheme="rk4")
    with pytest.raises(ConfigurationError):
        FlowConfig(t_end=0.0)
    with pytest.raises(ConfigurationError):
        FlowConfig(t_end=1.0, dt=-1.0)
    with pytest.raises(ConfigurationError):
        FlowConfig(t_end=1.0, sample_times=(2.0,))


def test_cfl_step():
    d = make_grid((0, 1, 0, 1), 9, 9)
    assert cfl_dt(d, 0.5) == pytest.approx(0.5 * 0.1 ** 4 / 64)


@pytest.mark.parametrize("scheme", ["explicit", "frozen"])
def test_zero_data_is_stationary(scheme):
    d = make_grid((0, 1, 0, 1), 9, 9)
    bc = BoundaryData.zero(d)
    traj, diags = run(ScalarField.zeros(d), bc, FlowConfig(t_end=1.0, scheme=scheme))
    assert traj.stationary and len(traj) == 1 and len(diags) == 1
    assert diags.records[0].W == 0.0


def test_plane_is_stationary():
    d = make_grid((0, 1, 0, 1), 9, 9)
    p = make_preset("plane", d, a=0.3, b=-0.2, c=0.1)
    traj, _ = run(p.field(d), p.boundary(d), FlowConfig(t_end=1.0, dt=1e-3))
    assert traj.stationary and traj.times == [0.0]


def test_incompatible_initial_data_rejected():
    d = make_grid((0, 1, 0, 1), 9, 9)
    with pytest.raises(CompatibilityError):
        run(ScalarField.from_function(d, lambda X, Y: X), BoundaryData.zero(d), FlowConfig(t_end=1.0))


@pytest.mark.parametrize("step", [step_explicit, step_frozen])
def test_zero_step_is_identity(step):
    d, u, bc = _bump()
    s = step(FlowState(u), bc, 0.0)
    assert np.array_equal(s.u.interior, u.interior)


@pytest.mark.parametrize("scheme", ["explicit", "frozen"])
def test_boundary_data_kept_exactly(scheme):
    d = make_grid((0, 1, 0, 1), 17, 17)
    p = make_preset("gaussian", d, amplitude=0.05, width=0.4)
    u0 = apply_clamped_ghosts(p.field(d), p.boundary(d))
    bc = BoundaryData.from_field(u0)
    dt = cfl_dt(d) if scheme == "explicit" else 1e-4
    traj, _ = run(u0, bc, FlowConfig(t_end=20 * dt, scheme=scheme, dt=dt))
    u = traj.final
    ref = apply_clamped_ghosts(u, bc)
    assert np.array_equal(u.values, ref.values)
    c = u.closure
    assert np.array_equal(c[0], bc.g0.bottom) and np.array_equal(c[-1], bc.g0.top)


def test_energy_decreases():
    d, u, bc = _bump(n=17, amplitude=5e-2)
    _, diags = run(u, bc, FlowConfig(t_end=5e-3, dt=1e-4))
    W = diags.column("W")
    assert np.all(np.diff(W) <= 1e-12 * W[0])


def test_translation_equivariance():
    # Shifting the grid and the data together leaves the interior values unchanged.
    d1, u1, bc1 = _bump()
    d2 = make_grid((0.5, 1.5, -1, 0), 17, 17)
    p = make_preset("bump", d2, amplitude=1e-2, width=0.3)
    bc2 = BoundaryData.zero(d2)
    u2 = apply_clamped_ghosts(p.field(d2), bc2)
    assert np.max(np.abs(u1.interior - u2.interior)) < 1e-15
    cfg = FlowConfig(t_end=1e-3, dt=1e-4)
    a, _ = run(u1, bc1, cfg)
    b, _ = run(u2, bc2, cfg)
    assert np.max(np.abs(a.final.interior - b.final.interior)) < 1e-14


def test_frozen_matches_explicit_first_order_in_dt():
    # Both schemes are first order; their gap at fixed time shrinks linearly with dt.
    d, u, bc = _bump(n=9, amplitude=1e-2)
    T = 4 * cfl_dt(d) * 32
    ref, _ = run(u, bc, FlowConfig(t_end=T, scheme="explicit"))
    gaps = []
    for k in (8, 16, 32):
        f, _ = run(u, bc, FlowConfig(t_end=T, dt=T / k))
        gaps.append(np.max(np.abs(f.final.interior - ref.final.interior)))
    assert gaps[0] / gaps[1] > 1.6 and gaps[1] / gaps[2] > 1.6


def test_frozen_system_on_flat_state_is_linear_biharmonic():
    d, u, bc = _bump(n=9, amplitude=1e-12)
    z = apply_clamped_ghosts(ScalarField.zeros(d), bc)
    M, b = frozen_system(z, bc, 1e-3)
    v = u.interior.ravel()
    Bv = biharmonic(u).interior.ravel()
    assert np.max(np.abs(M @ v - (v + 1e-3 * Bv))) < 1e-12 * np.max(np.abs(v))
    assert np.all(b == 0)


def test_blow_up_keeps_diagnostics():
    d, u, bc = _bump(n=17, amplitude=1e-2)
    cfg = FlowConfig(t_end=1.0, scheme="explicit", dt=100 * cfl_dt(d))
    with pytest.raises(BlowUpError) as info:
        run(u, bc, cfg)
    exc = info.value
    assert exc.diagnostics is not None and len(exc.diagnostics) >= 1
    assert exc.trajectory is not None and exc.last_state is not None
    assert math.isfinite(exc.diagnostics.records[0].W)


def test_diagnostics_csv_layout():
    d, u, bc = _bump(n=9)
    _, diags = run(u, bc, FlowConfig(t_end=3e-4, dt=1e-4))
    text = diags.to_csv().splitlines()
    assert text[0] == ",".join(DIAG_COLUMNS)
    assert len(text) == 1 + len(diags) == 5


def test_sample_times_are_hit():
    d, u, bc = _bump(n=9)
    ts = (1.5e-4, 2.5e-4)
    traj, _ = run(u, bc, FlowConfig(t_end=4e-4, dt=1e-4, diag_every=100, sample_times=ts))
    assert traj.times == pytest.approx([0.0, 1.5e-4, 2.5e-4, 4e-4], abs=1e-15)


def test_convergence_fit_zero_data():
    d = make_grid((0, 1, 0, 1), 9, 9)
    traj, _ = run(ScalarField.zeros(d), BoundaryData.zero(d), FlowConfig(t_end=1.0))
    fit = convergence_fit(traj, traj.final)
    assert fit.rate == math.inf and fit.accepted


def test_dissipation_probe_small_data():
    # The fitted Q power is only identified once discretization error is small; 17 x 17 gives -1.15.
    d, u, bc = _bump(n=33, amplitude=1e-2)
    traj, _ = run(u, bc, FlowConfig(t_end=2e-3, dt=1e-4))
    rep = dissipation_probe(traj)
    assert rep.monotone
    assert rep.max_rel_error < 0.1
    assert rep.fitted_q_power == pytest.approx(-1.0, abs=0.1)


def test_dissipation_probe_needs_samples():
    d, u, bc = _bump(n=9)
    traj, _ = run(u, bc, FlowConfig(t_end=2e-4, dt=1e-4))
    with pytest.raises(ValueError):
        dissipation_probe(traj)


def test_energy_of_flow_state_matches_diagnostic():
    d, u, bc = _bump(n=9)
    traj, diags = run(u, bc, FlowConfig(t_end=2e-4, dt=1e-4))
    assert diags.records[-1].W == willmore_energy(traj.final)
