"""Smoothing of Lipschitz data without the fourth-order compatibility condition.

The tent has kinks along three lines, so D^2 u starts as a measure.  For
data of class C^1 the flow should give D^beta u ~ t^(-(|beta| - 1)/4):
slope -1/4 for second derivatives, -1/2 for third ones.  Samples are taken
geometrically towards t = 0.
"""
import numpy as np

from willmore_flow.analysis import blowup_rate_fit
from willmore_flow.flow import FlowConfig, run
from willmore_flow.grid import BoundaryData, apply_clamped_ghosts, make_grid
from willmore_flow.presets import make_preset

d = make_grid((0, 1, 0, 1), 65, 65)
bc = BoundaryData.zero(d)
u0 = apply_clamped_ghosts(make_preset("tent", d, amplitude=0.05, width=0.4).field(d), bc)

T = 2.5e-5
n = int(np.log2(T / 1e-7) * 4)
samples = tuple(T * 2.0 ** (-np.arange(n + 1) / 4))
# dt = 1 means: step exactly from sample to sample
traj, diags = run(u0, bc, FlowConfig(t_end=T, dt=1.0, sample_times=samples, diag_every=10 ** 9))

h = d.h
window = ((1.5 * h) ** 4, (3.3 * h) ** 4)
print(f"fit window t in [{window[0]:.2e}, {window[1]:.2e}]  (between (1.5h)^4 and (3.3h)^4)")
for beta in ((2, 0), (3, 0)):
    fit = blowup_rate_fit(traj, beta, s=1.0, t_window=window)
    print(f"  max|D^{beta} u| ~ t^{fit.slope:+.3f}   expected {fit.expected:+.2f}")
print(f"energy falls from {diags.records[0].W:.3e} to {diags.records[-1].W:.3e}")
