"""Geometry of the graph of ``u`` and the Willmore energy.

Sign convention: ``H = div(grad u / Q)`` with upward unit normal
``(-grad u, 1) / Q``.  A dome ``u = sqrt(R^2 - |x|^2)`` therefore has
``H = -2/R``.  Every module takes its curvature from here.

All quantities are evaluated pointwise from the centered stencil fields of
:mod:`willmore_flow.grid`.  Derivatives of composite expressions (needed for
the Laplace-Beltrami operator) are expanded by the product rule through a
small second-order jet type instead of nested differencing, so the only
stencils ever applied to ``u`` are the compact ones of :func:`grid.diff`.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import ScalarField, diff_array, edges_from_closure, integrate, polyline_length
from .errors import StateError


def derivative_fields(u, max_order=4):
    """All centered derivatives ``D^(k,l) u`` with ``k + l <= max_order`` as raw arrays."""
    h = u.domain.h
    return {(k, n - k): diff_array(u.values, k, n - k, h)
            for n in range(1, max_order + 1) for k in range(n, -1, -1)}


class Jet:
    """Value with first and second partial derivatives, propagated exactly.

    Second-derivative slots may hold the scalar 0.0 when only first
    derivatives of a result are needed.
    """

    __slots__ = ("v", "x", "y", "xx", "xy", "yy")

    def __init__(self, v, x, y, xx=0.0, xy=0.0, yy=0.0):
        self.v, self.x, self.y, self.xx, self.xy, self.yy = v, x, y, xx, xy, yy

    @staticmethod
    def const(c):
        return Jet(c, 0.0, 0.0)

    def _lift(self, other):
        return other if isinstance(other, Jet) else Jet.const(other)

    def __add__(self, other):
        o = self._lift(other)
        return Jet(self.v + o.v, self.x + o.x, self.y + o.y,
                   self.xx + o.xx, self.xy + o.xy, self.yy + o.yy)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.x, -self.y, -self.xx, -self.xy, -self.yy)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return self._lift(other) - self

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(other * self.v, other * self.x, other * self.y,
                       other * self.xx, other * self.xy, other * self.yy)
        a, b = self, other
        return Jet(a.v * b.v,
                   a.x * b.v + a.v * b.x,
                   a.y * b.v + a.v * b.y,
                   a.xx * b.v + 2.0 * a.x * b.x + a.v * b.xx,
                   a.xy * b.v + a.x * b.y + a.y * b.x + a.v * b.xy,
                   a.yy * b.v + 2.0 * a.y * b.y + a.v * b.yy)

    __rmul__ = __mul__

    def compose(self, f, df, d2f):
        """Chain rule for ``f(self)`` given ``f``, ``f'`` and ``f''`` at ``self.v``."""
        return Jet(f,
                   df * self.x,
                   df * self.y,
                   d2f * self.x * self.x + df * self.xx,
                   d2f * self.x * self.y + df * self.xy,
                   d2f * self.y * self.y + df * self.yy)

    def reciprocal(self):
        r = 1.0 / self.v
        return self.compose(r, -r * r, 2.0 * r * r * r)

    def sqrt(self):
        s = np.sqrt(self.v)
        return self.compose(s, 0.5 / s, -0.25 / (s * self.v))

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / other)
        return self * other.reciprocal()

    def dx(self):
        """First-order jet of ``d/dx self`` (second derivatives dropped)."""
        return Jet(self.x, self.xx, self.xy)

    def dy(self):
        return Jet(self.y, self.xy, self.yy)


def gradient_jets(D):
    """Second-order jets of ``u_x, u_y, u_xx, u_xy, u_yy`` from stencil fields."""
    ux = Jet(D[1, 0], D[2, 0], D[1, 1], D[3, 0], D[2, 1], D[1, 2])
    uy = Jet(D[0, 1], D[1, 1], D[0, 2], D[2, 1], D[1, 2], D[0, 3])
    uxx = Jet(D[2, 0], D[3, 0], D[2, 1], D[4, 0], D[3, 1], D[2, 2])
    uxy = Jet(D[1, 1], D[2, 1], D[1, 2], D[3, 1], D[2, 2], D[1, 3])
    uyy = Jet(D[0, 2], D[1, 2], D[0, 3], D[2, 2], D[1, 3], D[0, 4])
    return ux, uy, uxx, uxy, uyy


def _q(ux, uy):
    return np.sqrt(1.0 + (ux * ux + uy * uy))


def _h(ux, uy, uxx, uxy, uyy, Q):
    # Grouping is symmetric under x <-> y so transposed fields give identical bits.
    return (uxx + uyy) / Q - ((ux * ux * uxx + uy * uy * uyy) + 2.0 * (ux * uy) * uxy) / Q ** 3


def _k(uxx, uxy, uyy, Q):
    return (uxx * uyy - uxy * uxy) / Q ** 4


def _field(u, arr):
    return ScalarField(u.domain, arr, u.time)


def area_element(u):
    """``Q = sqrt(1 + |grad u|^2)``."""
    D = derivative_fields(u, 1)
    return _field(u, _q(D[1, 0], D[0, 1]))


def mean_curvature(u):
    """``H = lap u / Q - grad u . (D^2 u grad u) / Q^3``."""
    D = derivative_fields(u, 2)
    Q = _q(D[1, 0], D[0, 1])
    return _field(u, _h(D[1, 0], D[0, 1], D[2, 0], D[1, 1], D[0, 2], Q))


def mean_curvature_divergence(u):
    """``H = div(grad u / Q)`` expanded by the product rule (independent algebra)."""
    D = derivative_fields(u, 2)
    ux = Jet(D[1, 0], D[2, 0], D[1, 1])
    uy = Jet(D[0, 1], D[1, 1], D[0, 2])
    Qinv = (1.0 + ux * ux + uy * uy).sqrt().reciprocal()
    return _field(u, (ux * Qinv).x + (uy * Qinv).y)


def gauss_curvature(u):
    """``K = det D^2 u / Q^4``."""
    D = derivative_fields(u, 2)
    Q = _q(D[1, 0], D[0, 1])
    return _field(u, _k(D[2, 0], D[1, 1], D[0, 2], Q))


@dataclass(frozen=True)
class GeometricQuantities:
    Q: ScalarField
    H: ScalarField
    K: ScalarField


def geometric_quantities(u):
    D = derivative_fields(u, 2)
    Q = _q(D[1, 0], D[0, 1])
    H = _h(D[1, 0], D[0, 1], D[2, 0], D[1, 1], D[0, 2], Q)
    K = _k(D[2, 0], D[1, 1], D[0, 2], Q)
    return GeometricQuantities(_field(u, Q), _field(u, H), _field(u, K))


def _closure_or_fail(f, what):
    c = f.closure
    if not np.all(np.isfinite(c)):
        raise StateError(f"{what} needs the first ghost layer populated")
    return c


def willmore_energy(u):
    """``W(u) = 1/4 int H^2 Q dx`` by the trapezoid rule over the closure."""
    g = geometric_quantities(u)
    H = _closure_or_fail(g.H, "willmore_energy")
    return 0.25 * integrate(u.domain, H * H * g.Q.closure)


def surface_area(u):
    """``int Q dx``."""
    return integrate(u.domain, _closure_or_fail(area_element(u), "surface_area"))


@dataclass(frozen=True)
class _Pieces:
    Q: np.ndarray
    H: np.ndarray
    K: np.ndarray
    lb: np.ndarray


def _pieces(u):
    """Q, H, K and the Laplace-Beltrami of H, all from one set of stencil fields."""
    D = derivative_fields(u, 4)
    ux, uy, uxx, uxy, uyy = gradient_jets(D)
    Qj = (1.0 + (ux * ux + uy * uy)).sqrt()
    cx = 1.0 + uy * uy
    cy = 1.0 + ux * ux
    cxy = ux * uy
    Hj = (cx * uxx - 2.0 * cxy * uxy + cy * uyy) / (Qj * Qj * Qj)
    Hx, Hy = Hj.dx(), Hj.dy()
    Qinv = Qj.reciprocal()
    A = (cx * Hx - cxy * Hy) * Qinv
    B = (cy * Hy - cxy * Hx) * Qinv
    lb = (A.x + B.y) * Qinv.v
    K = _k(D[2, 0], D[1, 1], D[0, 2], Qj.v)
    return _Pieces(Qj.v, Hj.v, K, lb)


def laplace_beltrami_H(u):
    """Surface Laplacian of the mean curvature.

    ``(1/Q) d/dx{(1/Q)((1+u_y^2) H_x - u_x u_y H_y)}
    + (1/Q) d/dy{(1/Q)(-u_x u_y H_x + (1+u_x^2) H_y)}``,
    with every outer derivative taken by the product rule.
    """
    if u.domain.nx < 5 or u.domain.ny < 5:
        raise StateError("interior too narrow for fourth-order stencils")
    p = _pieces(u)
    return _field(u, p.lb)


def willmore_operator(u):
    """``Delta_Gamma H + 2 H (H^2/4 - K)``; zero for Willmore graphs."""
    p = _pieces(u)
    return _field(u, p.lb + 2.0 * p.H * (0.25 * p.H * p.H - p.K))


def _pairwise_max_distance(points, chunk=1024):
    best = 0.0
    n = len(points)
    for start in range(0, n, chunk):
        block = points[start:start + chunk]
        d2 = np.sum((block[:, None, :] - points[None, start:, :]) ** 2, axis=-1)
        best = max(best, float(d2.max()))
    return float(np.sqrt(best))


def diameter_bound(u, bc=None):
    """Return ``(bound, diam)`` for the discrete graph.

    ``bound = (16/pi) (int |H| Q dx + (pi/2) L)`` where ``L`` is the length
    of the boundary polyline ``(x, g0(x))``, taken from ``bc`` if given and
    from the boundary values of ``u`` otherwise.  ``diam`` is the chordal
    diameter of the point set ``{(x, u(x))}`` over closure nodes.
    """
    g = geometric_quantities(u)
    H = _closure_or_fail(g.H, "diameter_bound")
    curv = integrate(u.domain, np.abs(H) * g.Q.closure)
    heights = bc.g0 if bc is not None else edges_from_closure(u.closure)
    length = polyline_length(u.domain, heights)
    bound = (16.0 / np.pi) * (curv + 0.5 * np.pi * length)
    X, Y = u.domain.mesh()
    cl = u.domain.closure
    pts = np.column_stack([X[cl].ravel(), Y[cl].ravel(), u.closure.ravel()])
    return bound, _pairwise_max_distance(pts)
