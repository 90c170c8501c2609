"""Assemblies of the flow right-hand side and their structural checks.

Three routes to ``u_t``:

* geometric:  ``-Q {Delta_Gamma H + 2H(H^2/4 - K)}``
* divergence: ``-Q div{(1/Q)(I - grad u (x) grad u / Q^2) grad(QH) - (H^2/2Q) grad u}``
* split:      ``-(L(grad u) D^4 u + R)``

The remainder ``R`` is defined as the difference of the first and the
principal part, so the split identity holds by construction.  Because the
geometric route is built from the same compact fourth-order stencils that
the principal part uses, ``R`` does not see the discrete fourth derivatives
at all, which is what makes the frozen-coefficient stepper stable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import FOURTH_ORDER, ScalarField, diff, diff_array
from .geometry import _pieces, _q, _h, derivative_fields


@dataclass(frozen=True)
class PrincipalCoeffs:
    """Coefficients ``L_kl`` of the principal part, one field each."""

    L40: ScalarField
    L31: ScalarField
    L22: ScalarField
    L13: ScalarField
    L04: ScalarField
    sup_grad: float = 0.0

    def items(self):
        return zip(FOURTH_ORDER, (self.L40, self.L31, self.L22, self.L13, self.L04))

    def arrays(self):
        return {beta: f.values for beta, f in self.items()}


def coeffs_from_gradient(ux, uy):
    """Raw ``L_kl`` arrays for given gradient arrays (any matching shape)."""
    a = 1.0 + uy * uy
    b = 1.0 + ux * ux
    c = ux * uy
    q4 = (1.0 + (ux * ux + uy * uy)) ** 2
    return {(4, 0): a * a / q4,
            (3, 1): -4.0 * a * c / q4,
            (2, 2): (2.0 * a * b + 4.0 * c * c) / q4,
            (1, 3): -4.0 * b * c / q4,
            (0, 4): b * b / q4}


def principal_coeffs(u):
    """Evaluate the five coefficient fields at every node where ``grad u`` exists."""
    D = derivative_fields(u, 1)
    L = coeffs_from_gradient(D[1, 0], D[0, 1])
    g = np.hypot(D[1, 0], D[0, 1])[u.domain.closure]
    sup = float(np.max(g)) if np.all(np.isfinite(g)) else float(np.max(g[u.domain.interior]))
    return PrincipalCoeffs(*(ScalarField(u.domain, L[b], u.time) for b in FOURTH_ORDER),
                           sup_grad=sup)


def quartic_form(L, xi1, xi2):
    """``sum L_kl xi1^k xi2^l`` for coefficient arrays ``L`` keyed by multi-index."""
    return sum(L[k, l] * xi1 ** k * xi2 ** l for k, l in FOURTH_ORDER)


@dataclass(frozen=True)
class EllipticityReport:
    lower: float
    upper: float
    form_min: float
    form_max: float
    violations: int
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def unit_directions(n):
    th = np.pi * np.arange(n) / n
    return np.column_stack([np.cos(th), np.sin(th)])


def ellipticity_check(coeffs, xi_samples, slack=1e-10):
    """Check ``|xi|^4 / (1 + sup|grad u|^2)^2 <= L(xi) <= 4|xi|^4`` on interior nodes."""
    xi = np.asarray(xi_samples, dtype=float).reshape(-1, 2)
    if np.any(np.abs(np.hypot(xi[:, 0], xi[:, 1]) - 1.0) > 1e-12):
        raise ValueError("direction samples must be unit vectors")
    dom = coeffs.L40.domain
    L = {b: f.values[dom.interior] for b, f in coeffs.items()}
    lower = 1.0 / (1.0 + coeffs.sup_grad ** 2) ** 2
    fmin, fmax, bad = np.inf, -np.inf, 0
    for x1, x2 in xi:
        form = quartic_form(L, x1, x2)
        fmin = min(fmin, float(form.min()))
        fmax = max(fmax, float(form.max()))
        bad += int(np.count_nonzero((form < lower - slack) | (form > 4.0 + slack)))
    return EllipticityReport(lower, 4.0, fmin, fmax, bad, bad == 0)


def principal_apply(coeffs, u):
    """``L(grad u) D^4 u`` with the coefficients taken from ``coeffs``."""
    out = None
    for beta, Lf in coeffs.items():
        term = Lf.values * diff(u, beta).values
        out = term if out is None else out + term
    return ScalarField(u.domain, out, u.time)


def _operator_q(u):
    """``Q {Delta_Gamma H + 2H(H^2/4 - K)}`` as a raw array."""
    p = _pieces(u)
    return p.Q * (p.lb + 2.0 * p.H * (0.25 * p.H * p.H - p.K))


def rhs_geometric(u):
    return ScalarField(u.domain, -_operator_q(u), u.time)


def rhs_divergence(u):
    """Right-hand side from the divergence form by nested centered differences.

    ``QH`` is evaluated wherever second differences fit (closure plus the
    first ghost layer), its gradient and the flux on the closure, and the
    outer divergence on interior nodes only.
    """
    h = u.domain.h
    D = derivative_fields(u, 2)
    ux, uy = D[1, 0], D[0, 1]
    Q = _q(ux, uy)
    H = _h(ux, uy, D[2, 0], D[1, 1], D[0, 2], Q)
    QH = Q * H
    gx, gy = diff_array(QH, 1, 0, h), diff_array(QH, 0, 1, h)
    q2 = Q * Q
    proj = (ux * gx + uy * gy) / q2
    fx = (gx - proj * ux) / Q - 0.5 * H * H * ux / Q
    fy = (gy - proj * uy) / Q - 0.5 * H * H * uy / Q
    div = diff_array(fx, 1, 0, h) + diff_array(fy, 0, 1, h)
    out = np.full(u.values.shape, np.nan)
    ii = u.domain.interior
    out[ii] = -Q[ii] * div[ii]
    return ScalarField(u.domain, out, u.time)


def remainder(u, coeffs=None):
    """``R := Q{Delta_Gamma H + 2H(H^2/4 - K)} - L(grad u) D^4 u``."""
    coeffs = principal_coeffs(u) if coeffs is None else coeffs
    P = principal_apply(coeffs, u)
    return ScalarField(u.domain, _operator_q(u) - P.values, u.time)


@dataclass(frozen=True)
class RhsBundle:
    geometric: ScalarField
    divergence: ScalarField
    principal: ScalarField
    remainder: ScalarField

    @property
    def split(self):
        return self.principal, self.remainder


def rhs_bundle(u):
    coeffs = principal_coeffs(u)
    P = principal_apply(coeffs, u)
    op = _operator_q(u)
    return RhsBundle(ScalarField(u.domain, -op, u.time), rhs_divergence(u), P,
                     ScalarField(u.domain, op - P.values, u.time))


def biharmonic(u):
    """Discrete ``Delta^2 u`` with the same compact stencils as the principal part."""
    return diff(u, (4, 0)) + 2.0 * diff(u, (2, 2)) + diff(u, (0, 4))


def _d2_d3_norms(u):
    D = derivative_fields(u, 3)
    d2 = np.sqrt(D[2, 0] ** 2 + 2.0 * D[1, 1] ** 2 + D[0, 2] ** 2)
    d3 = np.sqrt(D[3, 0] ** 2 + 3.0 * D[2, 1] ** 2 + 3.0 * D[1, 2] ** 2 + D[0, 3] ** 2)
    return d2, d3


def remainder_bound_ratio(u, floor=1e-12):
    """Max over interior nodes of ``|R| / (|D^3u||D^2u| + |D^2u|^3)``.

    Nodes where the denominator is below ``floor`` are skipped; if ``R`` is
    not small there too, the ratio is reported as infinite.
    """
    ii = u.domain.interior
    R = np.abs(remainder(u).values[ii])
    d2, d3 = _d2_d3_norms(u)
    den = (d3 * d2 + d2 ** 3)[ii]
    small = den < floor
    if np.any(small & (R > 1e3 * floor)):
        return np.inf
    return float(np.max(R[~small] / den[~small])) if np.any(~small) else 0.0


@dataclass(frozen=True)
class CubicReport:
    epsilons: tuple
    residuals: tuple
    slope: float
    exact_zero: bool
    passed: bool

    def as_dict(self):
        return dict(self.__dict__)


def cubic_smallness_check(u, epsilons, atol=1e-10, min_slope=2.9):
    """Log-log slope of ``max |Delta^2(eps u) + rhs_geometric(eps u)|`` against ``eps``.

    ``u`` must carry populated ghosts; scaling ``u`` scales its ghost data
    consistently.  ``eps = 0`` entries are evaluated but excluded from the fit.
    """
    eps = tuple(float(e) for e in epsilons)
    ii = u.domain.interior
    res = []
    for e in eps:
        v = u * e
        res.append(float(np.max(np.abs((biharmonic(v) + rhs_geometric(v)).values[ii]))))
    if all(r <= atol for r in res):
        return CubicReport(eps, tuple(res), float("nan"), True, True)
    pos = [(e, r) for e, r in zip(eps, res) if e > 0 and r > 0]
    if len(pos) < 2:
        return CubicReport(eps, tuple(res), float("nan"), False, False)
    le, lr = np.log([p[0] for p in pos]), np.log([p[1] for p in pos])
    slope = float(np.polyfit(le, lr, 1)[0])
    return CubicReport(eps, tuple(res), slope, False, slope >= min_slope)
