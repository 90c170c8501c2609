"""Numerical checks of the explicit estimates and discrete Hoelder-norm estimators.

Discrete conventions
--------------------
* Derivatives ``D^beta u`` are the centered stencils of :mod:`grid`, taken on
  closure nodes (boundary ring included, ghosts supply the reach).
* Spatial Hoelder seminorms ``[f]_gamma`` are maxima of
  ``|f(x + d) - f(x)| / |d|^gamma`` over dyadic shifts ``d = 2^j h e`` with
  ``e`` along the axes and both diagonals.
* Temporal seminorms are maxima over all pairs of samples in the window.
* ``u_t`` at a sample is the backward difference to the previous sample, so
  every quantity at time ``t`` depends only on samples up to ``t``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, UndersampledError
from .geometry import surface_area, willmore_energy
from .grid import diff_array, integrate

SUP_CONSTANT = 64.0
ENERGY_CONSTANT = 16.0 ** 2 / math.pi ** 2


# ----------------------------------------------------------------------------
# Explicit a priori bounds
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class AprioriReport:
    lhs: float
    rhs: float
    passed: bool
    area: float
    perimeter: float
    trace_w11: float
    energy: float

    def as_dict(self):
        return dict(self.__dict__)


def apriori_bound(u, bc):
    """``sup|u| + int Q`` against ``64(|Omega| + |dOmega| + ||phi||_W11 + 16^2/pi^2 W)(1 + |Omega| W)``.

    ``||phi||_{W^{1,1}(dOmega)}`` is the arclength L1 norm of the trace plus
    its total variation along the boundary.
    """
    d = u.domain
    W = willmore_energy(u)
    lhs = float(np.max(np.abs(u.closure))) + surface_area(u)
    w11 = bc.trace_l1() + bc.tangential_variation()
    rhs = SUP_CONSTANT * (d.area + d.perimeter + w11 + ENERGY_CONSTANT * W) * (1.0 + d.area * W)
    return AprioriReport(lhs, rhs, lhs <= rhs, d.area, d.perimeter, w11, W)


@dataclass(frozen=True)
class SmallnessReport:
    deltas: tuple
    l2_norms: tuple
    slope: float
    skipped: bool
    reason: str
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def l2_norm(u):
    c = u.closure
    return math.sqrt(integrate(u.domain, c * c))


def l2_smallness_probe(family, K=10.0, min_decades=1.0):
    """Table of ``delta = W(u) + ||phi||_L1`` against ``||u||_L2`` over a family.

    Skipped (with a reason) when some member violates
    ``||(phi o gamma)'||_L1 < K`` or when ``delta`` does not span
    ``min_decades`` decades towards zero.  Otherwise the log-log slope of
    ``||u||_L2`` against ``delta`` is fitted; the probe passes if it is
    positive.
    """
    deltas, norms = [], []
    for u, bc in family:
        tv = bc.tangential_variation()
        if not tv < K:
            return SmallnessReport((), (), float("nan"), True,
                                   f"boundary derivative {tv:.3g} violates the bound K={K:g}", False)
        deltas.append(willmore_energy(u) + bc.trace_l1())
        norms.append(l2_norm(u))
    deltas, norms = np.array(deltas), np.array(norms)
    if np.all(norms == 0) and np.all(deltas == 0):
        return SmallnessReport(tuple(deltas), tuple(norms), float("nan"), False, "all members are zero", True)
    live = (deltas > 0) & (norms > 0)
    if live.sum() < 2 or np.log10(deltas[live].max() / deltas[live].min()) < min_decades:
        return SmallnessReport(tuple(deltas), tuple(norms), float("nan"), True,
                               "delta does not approach zero across the family", False)
    slope = float(np.polyfit(np.log(deltas[live]), np.log(norms[live]), 1)[0])
    return SmallnessReport(tuple(deltas), tuple(norms), slope, False, "", slope > 0)


# ----------------------------------------------------------------------------
# Discrete Hoelder seminorms
# ----------------------------------------------------------------------------

_DIRECTIONS = ((1, 0), (0, 1), (1, 1), (1, -1))


def _shift_pairs(a, sx, sy):
    """Views ``a(x)`` and ``a(x + s)`` over all nodes where both exist."""
    ny, nx = a.shape
    ys0, ys1 = (slice(0, ny - sy), slice(sy, ny)) if sy >= 0 else (slice(-sy, ny), slice(0, ny + sy))
    return a[ys0, 0:nx - sx], a[ys1, sx:nx]


def spatial_holder(f, h, gamma):
    """Dyadic Hoelder seminorm of a 2D array."""
    f = np.asarray(f, dtype=float)
    ny, nx = f.shape
    best = 0.0
    j = 1
    while j < max(nx, ny):
        for ex, ey in _DIRECTIONS:
            sx, sy = ex * j, ey * j
            if sx >= nx or abs(sy) >= ny:
                continue
            dist = h * j * math.hypot(ex, ey)
            a, b = _shift_pairs(f, sx, sy)
            if a.size:
                best = max(best, float(np.max(np.abs(b - a))) / dist ** gamma)
        j *= 2
    return best


def temporal_holder(stack, times, gamma):
    """``max_x max_{i<j} |f_j(x) - f_i(x)| / (t_j - t_i)^gamma`` over a sample stack."""
    t = np.asarray(times, dtype=float)
    best = 0.0
    for i in range(len(t) - 1):
        dt = (t[i + 1:] - t[i]) ** gamma
        diff = np.abs(stack[i + 1:] - stack[i]).reshape(len(dt), -1).max(axis=1)
        best = max(best, float(np.max(diff / dt)))
    return best


def multi_indices(order):
    return [(k, order - k) for k in range(order, -1, -1)]


def closure_derivative(u, beta):
    k, l = beta
    return diff_array(u.values, k, l, u.domain.h)[u.domain.closure]


def holder_norm(u, r):
    """Discrete ``||u||_{C^r}`` with ``C^k = C^{k-1,1}`` for integer ``k >= 1``."""
    if r < 0:
        raise ValueError("Hoelder order must be non-negative")
    k = int(math.floor(r))
    gamma = r - k
    if gamma == 0.0 and k >= 1:
        k, gamma = k - 1, 1.0
    if k > 4:
        raise ValueError("derivatives above order 4 are not available")
    h = u.domain.h
    total = 0.0
    for n in range(k + 1):
        for beta in multi_indices(n):
            total += float(np.max(np.abs(closure_derivative(u, beta))))
    if gamma > 0:
        for beta in multi_indices(k):
            total += spatial_holder(closure_derivative(u, beta), h, gamma)
    return total


# ----------------------------------------------------------------------------
# Weighted parabolic norms
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class WeightedNormSpec:
    """Parameters of ``C^{ell, ell/4}_s``; here ``ell = 4 + alpha``."""

    ell: float
    s: float
    alpha: float

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ConfigurationError("alpha must lie in (0, 1)")
        if self.s > self.ell:
            raise ConfigurationError("weight parameter s must not exceed ell")
        if self.ell >= 8:
            raise ConfigurationError("only one time derivative is supported (ell < 8)")

    @classmethod
    def standard(cls, s, alpha):
        return cls(4.0 + alpha, s, alpha)


class _Samples:
    """Closure-node derivative stacks of a trajectory, computed once."""

    def __init__(self, traj):
        self.times = np.array(traj.times, dtype=float)
        if len(self.times) < 2 or np.any(np.diff(self.times) <= 0):
            raise ValueError("trajectory needs at least two samples with increasing times")
        self.fields = traj.fields
        self.h = traj.fields[0].domain.h
        self._cache = {}

    def stack(self, k, beta):
        """``D_t^k D^beta u`` at every sample (NaN-free); ``k = 1`` starts at sample 1."""
        key = (k, beta)
        if key not in self._cache:
            if k == 0:
                self._cache[key] = np.stack([closure_derivative(u, beta) for u in self.fields])
            elif k == 1 and beta == (0, 0):
                u = self.stack(0, (0, 0))
                dt = np.diff(self.times)[:, None, None]
                self._cache[key] = (u[1:] - u[:-1]) / dt
            else:
                raise ValueError(f"unsupported derivative D_t^{k} D^{beta}")
        return self._cache[key]

    def stack_times(self, k):
        return self.times if k == 0 else self.times[1:]


def _terms(n_lo, n_hi, strict_lo=True, strict_hi=True):
    """``(k, beta)`` with ``n_lo < 4k + |beta| < n_hi`` (strictness per flag)."""
    out = []
    for k in (0, 1):
        for m in range(0, 5):
            n = 4 * k + m
            lo_ok = n > n_lo if strict_lo else n >= n_lo
            hi_ok = n < n_hi if strict_hi else n <= n_hi
            if lo_ok and hi_ok and (k == 0 or m == 0):
                out.extend((k, beta) for beta in multi_indices(m))
    return out


def unweighted_norm(traj, ell, _samples=None):
    """Discrete ``||u||_{C^{ell, ell/4}_{x,t}}`` over all samples of ``traj``."""
    S = _samples or _Samples(traj)
    fl = math.floor(ell)
    integral = ell == fl
    total = 0.0
    for k, beta in _terms(-1, fl, strict_hi=False):
        st = S.stack(k, beta)
        if st.size:
            total += float(np.max(np.abs(st)))
    if not integral:
        for k, beta in _terms(fl - 1, fl, strict_hi=False):
            st = S.stack(k, beta)
            total += max((spatial_holder(f, S.h, ell - fl) for f in st), default=0.0)
    for k, beta in _terms(ell - 4, ell):
        st = S.stack(k, beta)
        if len(st) >= 2:
            total += temporal_holder(st, S.stack_times(k), (ell - 4 * k - sum(beta)) / 4.0)
    return total


def _window_seminorm(S, spec, ti):
    """``[u]^ell_{Q'_t}`` from the samples ``ti`` (indices) in ``[t/2, t]``."""
    ell = spec.ell
    fl = math.floor(ell)
    total = 0.0
    if ell != fl:
        for k, beta in _terms(fl - 1, fl, strict_hi=False):
            st = S.stack(k, beta)
            idx = ti if k == 0 else ti[ti >= 1] - 1
            total += max((spatial_holder(st[i], S.h, ell - fl) for i in idx), default=0.0)
    for k, beta in _terms(ell - 4, ell):
        st = S.stack(k, beta)
        idx = ti if k == 0 else ti[ti >= 1] - 1
        if len(idx) >= 2:
            total += temporal_holder(st[idx], S.stack_times(k)[idx], (ell - 4 * k - sum(beta)) / 4.0)
    return total


def weighted_norm_estimate(traj, spec, t_min=None, min_window=4, detail=False):
    """Discrete ``||u||_{C^{ell, ell/4}_s(Q_T)}`` for the sampled trajectory.

    The first part is a maximum over the retained sample times ``t``
    (``t >= t_min``, by default twice the first positive sample time); each
    window ``[t/2, t]`` must contain ``min_window`` samples, otherwise
    :class:`UndersampledError` lists the offending times.
    """
    S = _Samples(traj)
    ell, s = spec.ell, spec.s
    t = S.times
    positive = t[t > 0]
    if len(positive) == 0:
        raise ValueError("trajectory has no positive sample times")
    t_lo = 2.0 * positive[0] if t_min is None else t_min
    retained = [i for i, ti in enumerate(t) if ti > 0 and ti >= t_lo * (1 - 1e-12)]
    windows, bad = {}, []
    for i in retained:
        ti = np.nonzero((t >= 0.5 * t[i] * (1 - 1e-12)) & (t <= t[i]))[0]
        if len(ti) < min_window:
            bad.append(t[i])
        windows[i] = ti
    if bad:
        raise UndersampledError(bad, min_window)

    part1 = 0.0
    for i, ti in windows.items():
        part1 = max(part1, t[i] ** ((ell - s) / 4.0) * _window_seminorm(S, spec, ti))

    part2 = 0.0
    for k, beta in _terms(s, ell):
        st = S.stack(k, beta)
        ts = S.stack_times(k)
        w = np.where(ts > 0, ts, 0.0) ** ((4 * k + sum(beta) - s) / 4.0)
        sup = np.abs(st).reshape(len(ts), -1).max(axis=1) if len(ts) else np.zeros(0)
        part2 += float(np.max(w * sup)) if len(ts) else 0.0

    part3 = unweighted_norm(traj, s, S) if s >= 0 else 0.0
    total = part1 + part2 + part3
    if detail:
        return total, {"weighted_seminorm": part1, "weighted_sup": part2, "unweighted_low": part3}
    return total


# ----------------------------------------------------------------------------
# Blow-up rates
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class BlowupFit:
    slope: float
    expected: float
    intercept: float
    times: tuple
    values: tuple
    reason: str = ""

    def __float__(self):
        return self.slope


def _time_derivative_fields(traj):
    """``u_t`` per sample: stored right-hand side when available, else backward differences."""
    from .grid import apply_clamped_ghosts, BoundaryData, ScalarField

    out = [None]
    zero = BoundaryData.zero(traj.domain)
    for i in range(1, len(traj)):
        r = traj.rhs[i] if traj.rhs and traj.rhs[i] is not None else None
        if r is None:
            dt = traj.times[i] - traj.times[i - 1]
            inner = (traj.fields[i].interior - traj.fields[i - 1].interior) / dt
        else:
            inner = r.interior
        out.append(apply_clamped_ghosts(ScalarField.from_interior(traj.domain, inner), zero))
    return out


def blowup_rate_fit(traj, deriv, s, t_window=None, min_samples=8):
    """Log-log slope of ``max_x |D_t^k D^beta u(t)|`` against ``t``.

    ``deriv`` is ``(k, (b1, b2))``, ``(b1, b2)``, or an integer order ``m``
    meaning the largest of all spatial ``D^beta u`` with ``|beta| = m``.  The default window
    is ``(0, T/4]``; theory predicts ``-(4k + |beta| - s)/4`` for data of
    class ``s``.
    """
    if isinstance(deriv, (int, np.integer)):
        k, betas = 0, multi_indices(int(deriv))
    elif len(deriv) == 2 and isinstance(deriv[1], (tuple, list)):
        k, betas = int(deriv[0]), [tuple(deriv[1])]
    else:
        k, betas = 0, [tuple(deriv)]
    expected = -(4 * k + sum(betas[0]) - s) / 4.0
    t = np.array(traj.times)
    lo, hi = (0.0, t[-1] / 4.0) if t_window is None else t_window
    sel = [i for i in range(len(t)) if lo < t[i] <= hi and (k == 0 or i >= 1)]
    if len(sel) < min_samples:
        raise ValueError(f"blow-up fit needs {min_samples} samples in ({lo:g}, {hi:g}], got {len(sel)}")
    fields = traj.fields if k == 0 else _time_derivative_fields(traj)
    d = traj.domain
    vals = np.array([max(float(np.max(np.abs(diff_array(fields[i].values, *beta, d.h)[d.interior])))
                         for beta in betas) for i in sel])
    ts = t[sel]
    if np.any(vals == 0):
        return BlowupFit(float("nan"), expected, float("nan"), tuple(ts), tuple(vals), "zero derivative")
    slope, icpt = np.polyfit(np.log(ts), np.log(vals), 1)
    return BlowupFit(float(slope), expected, float(icpt), tuple(ts), tuple(vals))


# ----------------------------------------------------------------------------
# Interpolation and product inequalities
# ----------------------------------------------------------------------------

@dataclass(frozen=True)
class InterpolationReport:
    holder_lhs: float
    holder_rhs: float
    holder_ratio: float
    m: int
    theta: float
    l2_lhs: float
    l2_rhs: float
    l2_ratio: float

    def as_dict(self):
        return dict(self.__dict__)


def _ratio(a, b):
    if a == 0.0:
        return 0.0
    return a / b if b > 0 else math.inf


def l2_interpolation_theta(m, alpha):
    """Exponent from 2D scaling: ``||u||_{C^m} ~ ||u||_{C^{m+alpha}}^{1-theta} ||u||_{L^2}^theta``."""
    return alpha / (m + alpha + 1.0)


def interpolation_check(u, a, b, lam):
    """Ratios of both interpolation inequalities for one field.

    Hoelder: ``||u||_{C^{lam a + (1-lam) b}} / (||u||_{C^a}^lam ||u||_{C^b}^{1-lam})``.
    Hoelder-L2 with ``m = floor(b)``, ``alpha = b - m`` (``b`` non-integer) or
    ``m = b - 1``, ``alpha = 1/2`` otherwise:
    ``||u||_{C^m} / (||u||_{C^{m+alpha}}^{1-theta} ||u||_{L^2}^theta)``.
    """
    if not 0 <= a <= b:
        raise ValueError("need 0 <= a <= b")
    if not 0 < lam < 1:
        raise ValueError("need 0 < lambda < 1")
    mid = lam * a + (1 - lam) * b
    lhs = holder_norm(u, mid)
    rhs = holder_norm(u, a) ** lam * holder_norm(u, b) ** (1 - lam)
    m = int(math.floor(b))
    alpha = b - m
    if alpha == 0.0:
        m, alpha = max(m - 1, 0), 0.5
    theta = l2_interpolation_theta(m, alpha)
    l2lhs = holder_norm(u, m)
    l2rhs = holder_norm(u, m + alpha) ** (1 - theta) * l2_norm(u) ** theta
    return InterpolationReport(lhs, rhs, _ratio(lhs, rhs), m, theta, l2lhs, l2rhs, _ratio(l2lhs, l2rhs))


def product_trajectory(tu, tw):
    """Pointwise product of two trajectories sampled at the same times."""
    from .flow import Trajectory
    from .grid import ScalarField

    if tu.times != tw.times:
        raise ValueError("trajectories must share their sample times")
    out = Trajectory(tu.bc)
    for t, a, b, st in zip(tu.times, tu.fields, tw.fields, tu.steps):
        out.times.append(t)
        out.fields.append(ScalarField(a.domain, a.values * b.values, t))
        out.rhs.append(None)
        out.steps.append(st)
    return out


def product_ratio(tu, tw, spec, **kw):
    """``||uw|| / (||u|| ||w||)`` for the weighted estimator."""
    nu = weighted_norm_estimate(tu, spec, **kw)
    nw = weighted_norm_estimate(tw, spec, **kw)
    nuw = weighted_norm_estimate(product_trajectory(tu, tw), spec, **kw)
    return _ratio(nuw, nu * nw)
