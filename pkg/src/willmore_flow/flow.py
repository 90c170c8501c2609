"""Time stepping of the clamped graphical Willmore flow and its diagnostics.

Two steppers share one state type:

``explicit``
    Forward Euler on ``rhs_geometric``; stable for ``dt <= c h^4 / 64``.
``frozen``
    Semi-implicit: the principal part with coefficients frozen at the old
    state is implicit, the remainder explicit,
    ``(I + dt L(grad u^n) D^4) u^{n+1} = u^n - dt R(u^n)``.

Boundary conditions enter through the ghost layers.  Because the ghost fill
is affine in the interior values, ``u = P v + c_bc`` with ``P`` the
homogeneous fill of interior values ``v`` and ``c_bc`` the fill of the
boundary data alone; the frozen system is assembled on ``v``.
"""
from __future__ import annotations

import io
import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (BlowUpError, CompatibilityError, ConfigurationError, NumericalError,
                     StateError)
from .geometry import area_element, derivative_fields, willmore_energy, surface_area
from .grid import (FOURTH_ORDER, BoundaryData, ScalarField, apply_clamped_ghosts,
                   check_compatibility, diff_array, fill_ghosts_array, integrate, probe_colors)
from .operator import principal_coeffs, principal_apply, rhs_geometric, _operator_q

log = logging.getLogger(__name__)

SCHEMES = ("explicit", "frozen")
CFL_DENOMINATOR = 64.0


def cfl_dt(domain, c=0.5):
    return c * domain.h ** 4 / CFL_DENOMINATOR


@dataclass(frozen=True)
class FlowConfig:
    """Run parameters.  Give ``dt`` for a fixed step, otherwise ``cfl`` is used."""

    t_end: float
    scheme: str = "frozen"
    dt: float | None = None
    cfl: float = 0.5
    diag_every: int = 1
    tol_stationary: float = 1e-8
    sample_times: tuple | None = None
    compat_tol: float = 1e-6
    max_steps: int | None = None

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ConfigurationError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")
        if not self.t_end > 0:
            raise ConfigurationError("t_end must be positive")
        if self.dt is not None and not self.dt > 0:
            raise ConfigurationError("fixed dt must be positive")
        if self.dt is None and not 0 < self.cfl <= 1:
            raise ConfigurationError("cfl factor must lie in (0, 1]")
        if self.diag_every < 1:
            raise ConfigurationError("diag_every must be >= 1")
        if not self.tol_stationary > 0:
            raise ConfigurationError("tol_stationary must be positive")
        if self.sample_times is not None:
            ts = tuple(sorted(float(t) for t in self.sample_times))
            if any(t <= 0 or t > self.t_end for t in ts):
                raise ConfigurationError("sample times must lie in (0, t_end]")
            object.__setattr__(self, "sample_times", ts)

    def step_size(self, domain):
        return self.dt if self.dt is not None else cfl_dt(domain, self.cfl)


@dataclass(frozen=True)
class FlowState:
    u: ScalarField
    t: float = 0.0
    step: int = 0
    last_rhs: ScalarField | None = None


@dataclass
class Trajectory:
    """Sampled states of one run: times, fields and the rhs at each sample."""

    bc: BoundaryData
    times: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    rhs: list = field(default_factory=list)
    steps: list = field(default_factory=list)
    stationary: bool = False

    def append(self, state, rhs):
        self.times.append(float(state.t))
        self.fields.append(state.u)
        self.rhs.append(rhs)
        self.steps.append(int(state.step))

    def __len__(self):
        return len(self.times)

    @property
    def domain(self):
        return self.bc.domain

    @property
    def final(self):
        return self.fields[-1]

    def restricted(self, t_max):
        """Samples with ``t <= t_max``."""
        keep = [i for i, t in enumerate(self.times) if t <= t_max]
        out = Trajectory(self.bc)
        for i in keep:
            out.times.append(self.times[i])
            out.fields.append(self.fields[i])
            out.rhs.append(self.rhs[i])
            out.steps.append(self.steps[i])
        return out


DIAG_COLUMNS = ("t", "W", "sup_u", "sup_grad_u", "l2_u", "area", "dWdt", "dissipation_rhs", "dt")


@dataclass(frozen=True)
class DiagRecord:
    t: float
    W: float
    sup_u: float
    sup_grad_u: float
    l2_u: float
    area: float
    dWdt: float
    dissipation_rhs: float
    dt: float

    def row(self):
        return tuple(getattr(self, c) for c in DIAG_COLUMNS)


@dataclass
class Diagnostics:
    records: list = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def column(self, name):
        return np.array([getattr(r, name) for r in self.records])

    def to_csv(self):
        buf = io.StringIO()
        buf.write(",".join(DIAG_COLUMNS) + "\n")
        for r in self.records:
            buf.write(",".join(format(v, ".17g") for v in r.row()) + "\n")
        return buf.getvalue()

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(self.to_csv())


def _boundary_zero(domain, interior):
    """Closure array with ``interior`` inside and zeros on the boundary ring."""
    c = np.zeros((domain.ny + 2, domain.nx + 2))
    c[1:-1, 1:-1] = interior
    return c


def energy_rate(u, rhs, bc):
    """Directional derivative of the discrete energy along ``rhs`` (central difference)."""
    d = u.domain
    r = rhs.interior
    rmax = float(np.max(np.abs(r)))
    if rmax == 0.0:
        return 0.0
    scale = max(float(np.max(np.abs(u.closure))), d.h ** 2)
    eps = 1e-4 * scale / rmax
    a = np.zeros(d.shape)
    a[d.interior] = r

    def W(s):
        v = u.values.copy()
        v[d.interior] += s * eps * a[d.interior]
        return willmore_energy(apply_clamped_ghosts(ScalarField(d, v), bc))

    return (W(1.0) - W(-1.0)) / (2.0 * eps)


def dissipation_integral(u, rhs, power=-1.0):
    """``-1/2 int u_t^2 Q^power dx`` with ``u_t = rhs`` inside and 0 on the boundary."""
    d = u.domain
    q = area_element(u).closure
    ut = _boundary_zero(d, rhs.interior)
    return -0.5 * integrate(d, ut * ut * q ** power)


def diagnose(u, rhs, bc, dt):
    d = u.domain
    D = derivative_fields(u, 1)
    grad = np.hypot(D[1, 0], D[0, 1])[d.closure]
    c = u.closure
    return DiagRecord(
        t=float(u.time if u.time is not None else 0.0),
        W=willmore_energy(u),
        sup_u=float(np.max(np.abs(c))),
        sup_grad_u=float(np.max(grad)),
        l2_u=math.sqrt(integrate(d, c * c)),
        area=surface_area(u),
        dWdt=energy_rate(u, rhs, bc),
        dissipation_rhs=dissipation_integral(u, rhs),
        dt=float(dt),
    )


# ----------------------------------------------------------------------------
# Steppers
# ----------------------------------------------------------------------------

def _finish(state, bc, interior, dt, what):
    d = state.u.domain
    if not np.all(np.isfinite(interior)):
        raise BlowUpError(f"non-finite values after {what} step {state.step + 1} at t={state.t + dt:.6g}",
                          last_state=state)
    a = np.full(d.shape, np.nan)
    a[d.interior] = interior
    fill_ghosts_array(a, d, bc.g0, bc.g1)
    if not np.all(np.isfinite(a)):
        raise BlowUpError(f"non-finite ghost values after {what} step at t={state.t + dt:.6g}",
                          last_state=state)
    t = state.t + dt
    return FlowState(ScalarField(d, a, t), t, state.step + 1)


def step_explicit(state, bc, dt):
    """Forward Euler step ``u + dt * rhs_geometric(u)``."""
    u = state.u
    rhs = state.last_rhs if state.last_rhs is not None else rhs_geometric(u)
    with np.errstate(over="ignore", invalid="ignore"):
        new = u.interior + dt * rhs.interior
    return _finish(state, bc, new, dt, "explicit")


@lru_cache(maxsize=16)
def stencil_matrices(domain):
    """Sparse maps from interior values to interior ``D^beta`` of the clamped extension.

    One matrix per fourth-order multi-index, built by colored probing of
    the homogeneous ghost fill.
    """
    z = BoundaryData.zero(domain)
    n = domain.n_interior
    ii = domain.interior
    parts = {beta: ([], [], []) for beta in FOURTH_ORDER}
    rows_all = np.arange(n)
    for mask, src, valid in probe_colors(domain):
        a = np.full(domain.shape, np.nan)
        a[ii] = mask.astype(float)
        fill_ghosts_array(a, domain, z.g0, z.g1)
        for beta in FOURTH_ORDER:
            vals = diff_array(a, beta[0], beta[1], domain.h)[ii].ravel()
            keep = valid & (vals != 0.0)
            r, c, v = parts[beta]
            r.append(rows_all[keep])
            c.append(src[keep])
            v.append(vals[keep])
    out = {}
    for beta, (r, c, v) in parts.items():
        out[beta] = sp.csr_matrix((np.concatenate(v), (np.concatenate(r), np.concatenate(c))),
                                  shape=(n, n))
    return out


def _bc_lift(bc):
    """Ghost-filled field that is zero inside and carries the boundary data."""
    d = bc.domain
    a = np.full(d.shape, np.nan)
    a[d.interior] = 0.0
    return fill_ghosts_array(a, d, bc.g0, bc.g1)


def frozen_system(u, bc, dt):
    """Matrix and right-hand side of one frozen-coefficient step from ``u``."""
    d = u.domain
    ii = d.interior
    coeffs = principal_coeffs(u)
    R = _operator_q(u) - principal_apply(coeffs, u).values
    lift = _bc_lift(bc)
    S = stencil_matrices(d)
    M = sp.identity(d.n_interior, format="csr")
    b = u.interior.ravel() - dt * R[ii].ravel()
    for beta, Lf in coeffs.items():
        L = Lf.values[ii].ravel()
        M = M + dt * sp.diags(L) @ S[beta]
        b = b - dt * L * diff_array(lift, beta[0], beta[1], d.h)[ii].ravel()
    return M.tocsc(), b


def step_frozen(state, bc, dt, rtol=1e-10):
    """One semi-implicit step; the linear residual is checked against ``rtol``."""
    u = state.u
    if dt == 0:
        return FlowState(u, state.t, state.step + 1)
    with np.errstate(over="ignore", invalid="ignore"):
        try:
            M, b = frozen_system(u, bc, dt)
        except StateError:
            raise BlowUpError(f"non-finite frozen coefficients at step {state.step + 1}",
                              last_state=state) from None
    if not np.all(np.isfinite(b)) or not np.all(np.isfinite(M.data)):
        raise BlowUpError(f"non-finite frozen system at step {state.step + 1}", last_state=state)
    try:
        lu = spla.splu(M, permc_spec="MMD_AT_PLUS_A")
    except RuntimeError as exc:
        raise NumericalError(f"sparse LU failed: {exc}", iterations=0) from exc
    x = lu.solve(b)
    bnorm = np.linalg.norm(b)
    res = np.linalg.norm(M @ x - b) / bnorm if bnorm > 0 else np.linalg.norm(x)
    it = 0
    while res > rtol and it < 3:
        x = x + lu.solve(b - M @ x)
        res = np.linalg.norm(M @ x - b) / bnorm if bnorm > 0 else np.linalg.norm(x)
        it += 1
    if not res <= rtol:
        if not np.all(np.isfinite(x)):
            raise BlowUpError(f"non-finite frozen solve at step {state.step + 1}", last_state=state)
        raise NumericalError(f"linear residual {res:.3e} above {rtol:.1e}", iterations=it + 1, residual=res)
    return _finish(state, bc, x.reshape(u.interior.shape), dt, "frozen")


STEPPERS = {"explicit": step_explicit, "frozen": step_frozen}


# ----------------------------------------------------------------------------
# Driver
# ----------------------------------------------------------------------------

def run(u0, bc, cfg):
    """Integrate from ``u0`` until ``t_end`` or stationarity.

    Samples (diagnostics and trajectory) are taken at step 0, every
    ``cfg.diag_every`` steps, at each of ``cfg.sample_times`` (steps are
    shortened to land on them) and at the final state.  Returns
    ``(trajectory, diagnostics)``.
    """
    rep = check_compatibility(u0, bc, tol=cfg.compat_tol, fourth_order=True)
    if not rep.passed:
        raise CompatibilityError(
            f"initial datum violates clamped data: trace {rep.trace_residual:.3e}, "
            f"normal {rep.normal_residual:.3e} (tol {cfg.compat_tol:g})")
    if not rep.fourth_order_passed:
        log.info("fourth-order compatibility not satisfied (residual %.3e); continuing",
                 rep.fourth_order_residual)

    d = u0.domain
    dt_nom = cfg.step_size(d)
    step = STEPPERS[cfg.scheme]
    u = apply_clamped_ghosts(u0, bc).with_time(0.0)
    state = FlowState(u, 0.0, 0)
    traj, diags = Trajectory(bc), Diagnostics()
    targets = list(cfg.sample_times or ())
    t_end = cfg.t_end
    tiny = 1e-12 * dt_nom

    def sample(st, rhs):
        traj.append(st, rhs)
        diags.records.append(diagnose(st.u, rhs, bc, dt_nom))

    try:
        while True:
            with np.errstate(over="ignore", invalid="ignore"):
                try:
                    rhs = rhs_geometric(state.u)
                except StateError:
                    raise BlowUpError(f"right-hand side overflowed at step {state.step}, "
                                      f"t={state.t:.6g}", last_state=state) from None
            state = FlowState(state.u, state.t, state.step, rhs)
            stationary = float(np.max(np.abs(rhs.interior))) < cfg.tol_stationary
            done = stationary or state.t >= t_end - tiny or (
                cfg.max_steps is not None and state.step >= cfg.max_steps)
            on_target = bool(targets) and abs(targets[0] - state.t) <= tiny
            if on_target:
                targets.pop(0)
            if state.step == 0 or done or on_target or state.step % cfg.diag_every == 0:
                sample(state, rhs)
            if done:
                traj.stationary = stationary
                break
            nxt = min([t_end] + targets[:1])
            h = min(dt_nom, nxt - state.t)
            if nxt - state.t - h < tiny:
                h = nxt - state.t
            state = step(state, bc, h)
    except BlowUpError as exc:
        exc.trajectory, exc.diagnostics = traj, diags
        if exc.last_state is None:
            exc.last_state = state
        raise
    return traj, diags


# ----------------------------------------------------------------------------
# Trajectory analysis
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class DissipationReport:
    times: tuple
    dWdt: tuple
    predicted: tuple
    rel_error: tuple
    max_rel_error: float
    monotone: bool
    fitted_q_power: float

    def as_dict(self):
        return dict(self.__dict__)


def dissipation_probe(traj, slack_rel=1e-8, slack_abs=1e-12):
    """Compare central-difference ``dW/dt`` with ``-1/2 int u_t^2 / Q``.

    ``u_t`` is the stored right-hand side at each sample.  Differences whose
    window reaches back to ``t = 0`` are skipped: without the fourth-order
    compatibility condition ``u_t`` is unbounded as ``t -> 0``.  The power
    ``p`` in ``-1/2 int u_t^2 Q^p`` is fitted against the exact directional
    derivative of the discrete energy, which carries no time-stepping error.
    Also checks ``W(t2) <= W(t1) + slack`` over all sample pairs.
    """
    from scipy.optimize import minimize_scalar

    if len(traj) < 4:
        raise ValueError("dissipation probe needs at least 4 samples")
    t = np.array(traj.times)
    W = np.array([willmore_energy(u) for u in traj.fields])
    slack = slack_rel * W[0] + slack_abs
    monotone = bool(np.all(W[1:] <= np.minimum.accumulate(W)[:-1] + slack))
    idx = range(2, len(t) - 1)
    meas = np.array([(W[k + 1] - W[k - 1]) / (t[k + 1] - t[k - 1]) for k in idx])
    pred = np.array([dissipation_integral(traj.fields[k], traj.rhs[k]) for k in idx])
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.where(pred != 0, np.abs(meas - pred) / np.abs(pred), np.where(meas == 0, 0.0, np.inf))

    live = [k for k in idx if np.any(traj.rhs[k].interior != 0)]
    if live:
        exact = np.array([energy_rate(traj.fields[k], traj.rhs[k], traj.bc) for k in live])

        def mismatch(p):
            model = np.array([dissipation_integral(traj.fields[k], traj.rhs[k], p) for k in live])
            return float(np.sum((exact / model - 1.0) ** 2))
        p_fit = float(minimize_scalar(mismatch, bounds=(-3.0, 3.0), method="bounded",
                                      options={"xatol": 1e-6}).x)
    else:
        p_fit = float("nan")
    log.info("dissipation probe: fitted Q power %.4f", p_fit)
    return DissipationReport(tuple(t[2:-1]), tuple(meas), tuple(pred), tuple(rel),
                             float(np.max(rel)) if len(rel) else 0.0, monotone, p_fit)


def l2_distance(u, v):
    c = u.closure - v.closure
    return math.sqrt(integrate(u.domain, c * c))


@dataclass(frozen=True)
class ConvergenceFit:
    rate: float
    amplitude: float
    r_squared: float
    times: tuple
    residuals: tuple
    accepted: bool

    def __iter__(self):
        return iter((self.rate, self.amplitude))


def convergence_fit(traj, u_inf, t_min=None, t_max=None, floor=1e-13):
    """Fit ``log ||u(t) - u_inf||_{L^2} = log(amplitude) - rate * t``.

    The window is ``[t_min, t_max]`` (default: after the first tenth of the
    run) restricted to residuals above ``floor`` times the initial one.
    A zero residual gives ``rate = inf``.  A tail that is not monotonically
    decreasing is rejected (``accepted = False``, rate NaN).
    """
    t = np.array(traj.times)
    r = np.array([l2_distance(u, u_inf) for u in traj.fields])
    if np.all(r == 0.0):
        return ConvergenceFit(math.inf, 0.0, 1.0, tuple(t), tuple(r), True)
    lo = t[-1] * 0.1 if t_min is None else t_min
    hi = t[-1] if t_max is None else t_max
    sel = (t >= lo) & (t <= hi) & (r > floor * r.max())
    tw, rw = t[sel], r[sel]
    if len(tw) < 3 or np.any(np.diff(rw) > 0):
        return ConvergenceFit(float("nan"), float("nan"), float("nan"), tuple(t), tuple(r), False)
    slope, icpt = np.polyfit(tw, np.log(rw), 1)
    fit = icpt + slope * tw
    ss_res = float(np.sum((np.log(rw) - fit) ** 2))
    ss_tot = float(np.sum((np.log(rw) - np.log(rw).mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ConvergenceFit(float(-slope), float(np.exp(icpt)), r2, tuple(tw), tuple(rw), True)
