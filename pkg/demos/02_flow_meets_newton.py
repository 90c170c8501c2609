"""The flow limit agrees with the Newton solution of the stationary problem.

A Gaussian is clamped to its own trace and slope, so the limit is a
curved stationary surface, not the plane.  The two solvers share no code
beyond the discrete operator.
"""
import numpy as np

from willmore_flow.flow import FlowConfig, convergence_fit, run
from willmore_flow.grid import apply_clamped_ghosts, make_grid
from willmore_flow.presets import make_preset
from willmore_flow.stationary import solve_stationary

d = make_grid((0, 1, 0, 1), 33, 33)
for amp in (1e-2, 5e-3):
    p = make_preset("gaussian", d, amplitude=amp, width=0.4)
    bc = p.boundary(d)
    u0 = apply_clamped_ghosts(p.field(d), bc)

    traj, _ = run(u0, bc, FlowConfig(t_end=1.0, dt=1e-4, diag_every=5))
    u_inf, hist = solve_stationary(bc, u0, return_history=True)
    fit = convergence_fit(traj, u_inf)

    print(f"amplitude {amp:g}")
    print(f"  flow stopped at t = {traj.times[-1]:.4f} after {traj.steps[-1]} steps")
    print("  Newton residuals: " + ", ".join(f"{r:.1e}" for _, r, _ in hist))
    print(f"  max |u_flow - u_newton| = {np.max(np.abs(traj.final.closure - u_inf.closure)):.1e}")
    print(f"  ||u(t) - u_inf|| ~ exp(-{fit.rate:.1f} t), R^2 = {fit.r_squared:.6f}")
