"""Uniform rectangular grids, centered stencils and clamped ghost layers.

Node layout
-----------
A :class:`GridDomain` with ``nx`` by ``ny`` interior points has ``nx + 2``
by ``ny + 2`` closure nodes (interior plus the boundary ring) and ``ghost``
extra layers on every side.  Field arrays are stored y-major, i.e. with shape
``(ny + 2 + 2*ghost, nx + 2 + 2*ghost)`` and ``values[j, i]`` at
``(x[i], y[j])``.  Unpopulated ghost nodes hold NaN, which lets stencils
detect missing data by NaN propagation.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import ConfigurationError, StateError

# 1D centered stencils, second order for every derivative order.
_STENCILS = {
    0: (1.0,),
    1: (-0.5, 0.0, 0.5),
    2: (1.0, -2.0, 1.0),
    3: (-0.5, 1.0, 0.0, -1.0, 0.5),
    4: (1.0, -4.0, 6.0, -4.0, 1.0),
}

# Multi-indices (k, l) of the fourth-order principal part.
FOURTH_ORDER = ((4, 0), (3, 1), (2, 2), (1, 3), (0, 4))


def stencil_reach(order):
    return (len(_STENCILS[order]) - 1) // 2


@dataclass(frozen=True)
class GridDomain:
    """Uniform grid with square cells over ``[x0, x1] x [y0, y1]``."""

    x0: float
    x1: float
    y0: float
    y1: float
    nx: int
    ny: int
    h: float
    ghost: int = 2

    def __post_init__(self):
        if self.ghost < 2:
            raise ConfigurationError(f"ghost width must be >= 2, got {self.ghost}")
        if self.nx < 5 or self.ny < 5:
            raise ConfigurationError(
                f"need at least 5 interior points per direction, got {self.nx}x{self.ny}")

    @property
    def shape(self):
        g = self.ghost
        return (self.ny + 2 + 2 * g, self.nx + 2 + 2 * g)

    @property
    def x(self):
        """x coordinates of every column, ghosts included."""
        return self.x0 + self.h * np.arange(-self.ghost, self.nx + 2 + self.ghost)

    @property
    def y(self):
        return self.y0 + self.h * np.arange(-self.ghost, self.ny + 2 + self.ghost)

    def mesh(self):
        return np.meshgrid(self.x, self.y)

    @property
    def interior(self):
        g = self.ghost
        return (slice(g + 1, g + 1 + self.ny), slice(g + 1, g + 1 + self.nx))

    @property
    def closure(self):
        g = self.ghost
        return (slice(g, g + 2 + self.ny), slice(g, g + 2 + self.nx))

    @property
    def area(self):
        return (self.x1 - self.x0) * (self.y1 - self.y0)

    @property
    def perimeter(self):
        return 2.0 * ((self.x1 - self.x0) + (self.y1 - self.y0))

    @property
    def n_interior(self):
        return self.nx * self.ny

    def boundary_mask(self):
        """Boolean mask over the closure marking boundary-ring nodes."""
        m = np.zeros((self.ny + 2, self.nx + 2), dtype=bool)
        m[0, :] = m[-1, :] = m[:, 0] = m[:, -1] = True
        return m


def make_grid(bounds, nx, ny):
    """Build a :class:`GridDomain` over ``bounds = (x0, x1, y0, y1)``.

    Cells must be square: ``(x1-x0)/(nx+1) == (y1-y0)/(ny+1)`` to within
    1e-12 relative.
    """
    x0, x1, y0, y1 = (float(b) for b in bounds)
    nx, ny = int(nx), int(ny)
    if not (x1 > x0 and y1 > y0):
        raise ConfigurationError(f"degenerate bounds {bounds}")
    if nx < 5 or ny < 5:
        raise ConfigurationError(f"need nx, ny >= 5, got {nx}, {ny}")
    hx = (x1 - x0) / (nx + 1)
    hy = (y1 - y0) / (ny + 1)
    if abs(hx - hy) > 1e-12 * max(hx, hy):
        raise ConfigurationError(f"cells are not square: hx={hx!r}, hy={hy!r}")
    return GridDomain(x0, x1, y0, y1, nx, ny, hx)


@dataclass(frozen=True, eq=False)
class ScalarField:
    """One scalar quantity sampled on every node of a grid.

    The value array is copied and frozen on construction, so fields behave as
    immutable snapshots.
    """

    domain: GridDomain
    values: np.ndarray
    time: float | None = None

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != self.domain.shape:
            raise ConfigurationError(
                f"field shape {vals.shape} does not match grid shape {self.domain.shape}")
        vals.flags.writeable = False
        object.__setattr__(self, "values", vals)
        if not np.all(np.isfinite(vals[self.domain.interior])):
            raise StateError("field has non-finite interior values")

    @classmethod
    def from_function(cls, domain, func, time=None, region="all"):
        """Sample ``func(X, Y)`` on all nodes (``region="all"``) or on the closure only."""
        X, Y = domain.mesh()
        vals = np.broadcast_to(np.asarray(func(X, Y), dtype=float), domain.shape).copy()
        if region == "closure":
            out = np.full(domain.shape, np.nan)
            out[domain.closure] = vals[domain.closure]
            vals = out
        elif region != "all":
            raise ValueError(f"unknown region {region!r}")
        return cls(domain, vals, time)

    @classmethod
    def from_interior(cls, domain, interior, time=None):
        vals = np.full(domain.shape, np.nan)
        vals[domain.interior] = np.asarray(interior, dtype=float).reshape(domain.ny, domain.nx)
        return cls(domain, vals, time)

    @classmethod
    def zeros(cls, domain, time=None):
        return cls(domain, np.zeros(domain.shape), time)

    @property
    def interior(self):
        return self.values[self.domain.interior]

    @property
    def closure(self):
        return self.values[self.domain.closure]

    def ghosts_populated(self):
        return bool(np.all(np.isfinite(self.values)))

    def with_values(self, values):
        return ScalarField(self.domain, values, self.time)

    def with_time(self, time):
        return ScalarField(self.domain, self.values, time)

    def _check(self, other):
        if isinstance(other, ScalarField):
            if other.domain != self.domain:
                raise ConfigurationError("fields live on different grids")
            return other.values
        return other

    def __add__(self, other):
        return self.with_values(self.values + self._check(other))

    __radd__ = __add__

    def __sub__(self, other):
        return self.with_values(self.values - self._check(other))

    def __rsub__(self, other):
        return self.with_values(self._check(other) - self.values)

    def __mul__(self, other):
        return self.with_values(self.values * self._check(other))

    __rmul__ = __mul__

    def __truediv__(self, other):
        return self.with_values(self.values / self._check(other))

    def __neg__(self):
        return self.with_values(-self.values)


# ----------------------------------------------------------------------------
# Boundary data
# ----------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class EdgeValues:
    """Values on the four edges; corners belong to every edge that contains them.

    ``left``/``right`` run over ``j = 0..ny+1`` and ``bottom``/``top`` over
    ``i = 0..nx+1``.
    """

    left: np.ndarray
    right: np.ndarray
    bottom: np.ndarray
    top: np.ndarray

    def __post_init__(self):
        for name in ("left", "right", "bottom", "top"):
            arr = np.array(getattr(self, name), dtype=float)
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)

    def max_abs(self):
        return max(float(np.max(np.abs(getattr(self, e)))) for e in ("left", "right", "bottom", "top"))

    def __sub__(self, other):
        return EdgeValues(self.left - other.left, self.right - other.right,
                          self.bottom - other.bottom, self.top - other.top)


def edges_from_closure(arr):
    """Slice the boundary ring out of a closure-shaped array."""
    return EdgeValues(arr[:, 0], arr[:, -1], arr[0, :], arr[-1, :])


def polyline_length(domain, heights):
    """Length of the boundary curve ``(x, g(x))`` for edge heights ``heights``."""
    h = domain.h
    return sum(float(np.sum(np.sqrt(h * h + np.diff(e) ** 2)))
               for e in (heights.left, heights.right, heights.bottom, heights.top))


@dataclass(frozen=True, eq=False)
class BoundaryData:
    """Clamped data: height ``g0`` and outward normal derivative ``g1``."""

    domain: GridDomain
    g0: EdgeValues
    g1: EdgeValues

    def __post_init__(self):
        d = self.domain
        for name in ("g0", "g1"):
            ev = getattr(self, name)
            for edge, n in (("left", d.ny + 2), ("right", d.ny + 2),
                            ("bottom", d.nx + 2), ("top", d.nx + 2)):
                arr = getattr(ev, edge)
                if arr.shape != (n,):
                    raise ConfigurationError(f"{name}.{edge} has shape {arr.shape}, expected ({n},)")
                if not np.all(np.isfinite(arr)):
                    raise ConfigurationError(f"{name}.{edge} is not finite")
        g0 = self.g0
        corners = ((g0.left[0], g0.bottom[0]), (g0.right[0], g0.bottom[-1]),
                   (g0.left[-1], g0.top[0]), (g0.right[-1], g0.top[-1]))
        for a, b in corners:
            if abs(a - b) > 1e-12 * max(1.0, abs(a), abs(b)):
                raise ConfigurationError("g0 disagrees between edges at a corner")

    @classmethod
    def zero(cls, domain):
        z = EdgeValues(np.zeros(domain.ny + 2), np.zeros(domain.ny + 2),
                       np.zeros(domain.nx + 2), np.zeros(domain.nx + 2))
        return cls(domain, z, z)

    @classmethod
    def from_functions(cls, domain, value, grad):
        """Exact trace and normal derivative of a smooth function.

        ``value(X, Y)`` gives the height and ``grad(X, Y)`` returns the pair
        ``(u_x, u_y)``.
        """
        X, Y = domain.mesh()
        cl = domain.closure
        Xc, Yc = X[cl], Y[cl]
        vals = np.broadcast_to(np.asarray(value(Xc, Yc), dtype=float), Xc.shape)
        gx, gy = grad(Xc, Yc)
        gx = np.broadcast_to(np.asarray(gx, dtype=float), Xc.shape)
        gy = np.broadcast_to(np.asarray(gy, dtype=float), Xc.shape)
        g0 = edges_from_closure(vals)
        g1 = EdgeValues(-gx[:, 0], gx[:, -1], -gy[0, :], gy[-1, :])
        return cls(domain, g0, g1)

    @classmethod
    def from_field(cls, u):
        """Discrete trace and centered normal derivative of a ghost-populated field."""
        g0 = edges_from_closure(u.closure)
        g1 = _normal_derivative(u)
        if g1 is None:
            raise StateError("from_field needs the first ghost layer populated")
        return cls(u.domain, g0, g1)

    def shifted(self, c):
        """Boundary data of ``u + c`` for a constant ``c``."""
        g0 = self.g0
        return BoundaryData(self.domain, EdgeValues(g0.left + c, g0.right + c, g0.bottom + c, g0.top + c), self.g1)

    def scaled(self, s):
        g0, g1 = self.g0, self.g1
        return BoundaryData(self.domain,
                            EdgeValues(s * g0.left, s * g0.right, s * g0.bottom, s * g0.top),
                            EdgeValues(s * g1.left, s * g1.right, s * g1.bottom, s * g1.top))

    def boundary_length(self):
        """Length of the 3D polyline ``(x, g0(x))`` around the boundary."""
        return polyline_length(self.domain, self.g0)

    def trace_l1(self):
        """``||g0||_{L^1(dOmega)}`` by the trapezoid rule along the edges."""
        h = self.domain.h
        return sum(h * (float(np.sum(np.abs(e))) - 0.5 * (abs(e[0]) + abs(e[-1])))
                   for e in (self.g0.left, self.g0.right, self.g0.bottom, self.g0.top))

    def tangential_variation(self):
        """``||(g0 o gamma)'||_{L^1}``: total variation of the trace."""
        return sum(float(np.sum(np.abs(np.diff(e))))
                   for e in (self.g0.left, self.g0.right, self.g0.bottom, self.g0.top))


# ----------------------------------------------------------------------------
# Stencils
# ----------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _offsets(k, l):
    """Ordered (dx, dy, weight) triples of the tensor stencil for d^k/dx^k d^l/dy^l.

    The list for ``(l, k)`` is the coordinate swap of the list for ``(k, l)``
    in the same order, so transposed fields give bit-identical derivatives.
    """
    if k < l:
        return tuple((dy, dx, w) for dx, dy, w in _offsets(l, k))
    cx, cy = _STENCILS[k], _STENCILS[l]
    rx, ry = stencil_reach(k), stencil_reach(l)
    out = []
    for a, wa in enumerate(cx):
        for b, wb in enumerate(cy):
            if wa * wb != 0.0:
                out.append((a - rx, b - ry, wa * wb))
    return tuple(out)


def diff_array(values, k, l, h):
    """Raw-array centered difference; NaN where the stencil does not fit."""
    ny, nx = values.shape
    rx, ry = stencil_reach(k), stencil_reach(l)
    out = np.full(values.shape, np.nan)
    acc = None
    for dx, dy, w in _offsets(k, l):
        term = w * values[ry + dy: ny - ry + dy, rx + dx: nx - rx + dx]
        acc = term if acc is None else acc + term
    out[ry: ny - ry, rx: nx - rx] = acc / h ** (k + l)
    return out


def diff(f, beta):
    """Second-order centered approximation of ``d^beta f`` (``|beta| <= 4``).

    Nodes whose stencil leaves the array come back as NaN; if any interior
    node is affected the ghost layer was not populated and
    :class:`StateError` is raised.
    """
    k, l = (int(b) for b in beta)
    if k < 0 or l < 0 or k + l > 4:
        raise ValueError(f"multi-index {beta} outside |beta| <= 4")
    out = diff_array(f.values, k, l, f.domain.h)
    if not np.all(np.isfinite(out[f.domain.interior])):
        raise StateError(f"ghost layer not populated for stencil {beta}")
    return ScalarField(f.domain, out, f.time)


# ----------------------------------------------------------------------------
# Clamped ghost layers
# ----------------------------------------------------------------------------

def _extrapolate(a, axis, target, step):
    """Quartic extrapolation: fill index ``target`` from the five nodes inward."""
    idx = [target + step * m for m in range(1, 6)]
    take = (lambda i: a[:, i]) if axis == 1 else (lambda i: a[i, :])
    return 5.0 * take(idx[0]) - 10.0 * take(idx[1]) + 10.0 * take(idx[2]) - 5.0 * take(idx[3]) + take(idx[4])


def fill_ghosts_array(a, domain, g0, g1):
    """In-place clamped ghost fill of a full-shape array.

    Order: boundary ring from ``g0``; x-ghosts along the closure rows
    (mirror with slope for layer 1, quartic extrapolation beyond); then
    y-ghosts along every column, where the corner blocks (columns outside the
    closure) use quartic extrapolation for all layers.
    """
    g, nx, ny, h = domain.ghost, domain.nx, domain.ny, domain.h
    iL, iR = g, g + nx + 1
    jB, jT = g, g + ny + 1
    rows = slice(jB, jT + 1)
    cols = slice(iL, iR + 1)
    a[rows, iL] = g0.left
    a[rows, iR] = g0.right
    a[jB, cols] = g0.bottom
    a[jT, cols] = g0.top

    a[rows, iL - 1] = a[rows, iL + 1] + 2.0 * h * g1.left
    a[rows, iR + 1] = a[rows, iR - 1] + 2.0 * h * g1.right
    for layer in range(2, g + 1):
        a[rows, iL - layer] = _extrapolate(a[rows], 1, iL - layer, +1)
        a[rows, iR + layer] = _extrapolate(a[rows], 1, iR + layer, -1)

    a[jB - 1, cols] = a[jB + 1, cols] + 2.0 * h * g1.bottom
    a[jT + 1, cols] = a[jT - 1, cols] + 2.0 * h * g1.top
    outer = np.r_[0:iL, iR + 1:a.shape[1]]
    a[jB - 1, outer] = _extrapolate(a[:, outer], 0, jB - 1, +1)
    a[jT + 1, outer] = _extrapolate(a[:, outer], 0, jT + 1, -1)
    for layer in range(2, g + 1):
        a[jB - layer, :] = _extrapolate(a, 0, jB - layer, +1)
        a[jT + layer, :] = _extrapolate(a, 0, jT + layer, -1)
    return a


def apply_clamped_ghosts(u, bc):
    """Return ``u`` with boundary nodes set to ``g0`` and ghosts filled from ``g1``.

    The first ghost layer mirrors the interior with slope,
    ``u[-1] = u[1] + 2 h g1``, which makes the centered normal derivative
    equal ``g1``; further layers are quartic extrapolations.  The input
    field is not modified and the operation is idempotent.
    """
    if bc.domain != u.domain:
        raise ConfigurationError("boundary data and field live on different grids")
    a = np.array(u.values)
    fill_ghosts_array(a, u.domain, bc.g0, bc.g1)
    return ScalarField(u.domain, a, u.time)


# Interior nodes of one color are >= 5 apart in some direction, so a compact
# stencil (reach 2, ghosts eliminated) sees at most one of them.
PROBE_PERIOD = 5


def probe_colors(domain):
    """Yield ``(mask, src_flat, valid)`` for each of the 25 probing colors.

    ``mask`` selects the interior nodes of the color; for every interior
    output node, ``src_flat`` is the flat interior index of the unique node
    of that color within its 5x5 window and ``valid`` says whether that node
    exists.  Flat indices are y-major, matching ``values[interior].ravel()``.
    """
    p = PROBE_PERIOD
    I, J = np.meshgrid(np.arange(domain.nx), np.arange(domain.ny))
    for b in range(p):
        for a in range(p):
            si = I + (a - I + 2) % p - 2
            sj = J + (b - J + 2) % p - 2
            valid = (si >= 0) & (si < domain.nx) & (sj >= 0) & (sj < domain.ny)
            src = np.where(valid, sj * domain.nx + si, 0)
            yield (I % p == a) & (J % p == b), src.ravel(), valid.ravel()


def _normal_derivative(u):
    """Outward normal derivative at boundary nodes (centered), or None if ghosts missing."""
    d = u.domain
    g, h = d.ghost, d.h
    v = u.values
    rows = slice(g, g + d.ny + 2)
    cols = slice(g, g + d.nx + 2)
    iL, iR, jB, jT = g, g + d.nx + 1, g, g + d.ny + 1
    parts = (
        (v[rows, iL - 1] - v[rows, iL + 1]) / (2 * h),
        (v[rows, iR + 1] - v[rows, iR - 1]) / (2 * h),
        (v[jB - 1, cols] - v[jB + 1, cols]) / (2 * h),
        (v[jT + 1, cols] - v[jT - 1, cols]) / (2 * h),
    )
    if not all(np.all(np.isfinite(p)) for p in parts):
        return None
    return EdgeValues(*parts)


def _normal_derivative_one_sided(u):
    d = u.domain
    c = u.closure
    h = d.h
    return EdgeValues(
        (3 * c[:, 0] - 4 * c[:, 1] + c[:, 2]) / (2 * h),
        (3 * c[:, -1] - 4 * c[:, -2] + c[:, -3]) / (2 * h),
        (3 * c[0, :] - 4 * c[1, :] + c[2, :]) / (2 * h),
        (3 * c[-1, :] - 4 * c[-2, :] + c[-3, :]) / (2 * h),
    )


@dataclass
class CompatibilityReport:
    trace_residual: float
    normal_residual: float
    tol: float
    passed: bool
    fourth_order_residual: float | None = None
    fourth_order_passed: bool | None = None
    notes: list = field(default_factory=list)

    def as_dict(self):
        return {
            "trace_residual": self.trace_residual,
            "normal_residual": self.normal_residual,
            "tol": self.tol,
            "passed": self.passed,
            "fourth_order_residual": self.fourth_order_residual,
            "fourth_order_passed": self.fourth_order_passed,
            "notes": list(self.notes),
        }


def check_compatibility(u0, bc, tol=1e-6, fourth_order=False):
    """Residuals of the clamped compatibility conditions at ``t = 0``.

    Reports ``max |u0 - g0|`` and ``max |d_nu u0 - g1|`` over boundary
    nodes.  With ``fourth_order`` set, also the Willmore operator of the
    ghost-filled ``u0`` on the ring of interior nodes next to the boundary,
    where the fourth derivatives are available.
    """
    notes = []
    trace = (edges_from_closure(u0.closure) - bc.g0).max_abs()
    dn = _normal_derivative(u0)
    if dn is None:
        dn = _normal_derivative_one_sided(u0)
        notes.append("normal derivative from one-sided differences (ghosts of u0 not populated)")
    normal = (dn - bc.g1).max_abs()
    if not (math.isfinite(trace) and math.isfinite(normal)):
        raise StateError("u0 has non-finite boundary values")
    report = CompatibilityReport(trace, normal, tol, trace <= tol and normal <= tol, notes=notes)
    if fourth_order:
        from .geometry import willmore_operator

        w = willmore_operator(apply_clamped_ghosts(u0, bc)).interior
        ring = np.zeros(w.shape, dtype=bool)
        ring[0, :] = ring[-1, :] = ring[:, 0] = ring[:, -1] = True
        res = float(np.max(np.abs(w[ring])))
        report.fourth_order_residual = res
        report.fourth_order_passed = res <= tol
        report.notes.append("fourth-order residual evaluated on the interior ring adjacent to the boundary")
    return report


# ----------------------------------------------------------------------------
# Quadrature
# ----------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _trapezoid_weights(domain):
    wx = np.ones(domain.nx + 2)
    wx[[0, -1]] = 0.5
    wy = np.ones(domain.ny + 2)
    wy[[0, -1]] = 0.5
    w = np.outer(wy, wx) * domain.h ** 2
    w.flags.writeable = False
    return w


def integrate(domain, closure_values):
    """Composite trapezoid rule over the closure nodes.

    Uses ``math.fsum`` so the result does not depend on summation order.
    """
    vals = np.asarray(closure_values, dtype=float)
    return math.fsum((_trapezoid_weights(domain) * vals).ravel())


# ----------------------------------------------------------------------------
# Binary field dumps
# ----------------------------------------------------------------------------

_MAGIC = b"WGF1"
_HEADER = struct.Struct("<4sII5d")


def dumps_field(u):
    """Serialize the interior of ``u`` in the little-endian WGF1 format."""
    d = u.domain
    t = float("nan") if u.time is None else float(u.time)
    head = _HEADER.pack(_MAGIC, d.nx, d.ny, d.x0, d.x1, d.y0, d.y1, t)
    body = np.ascontiguousarray(u.interior, dtype="<f8").tobytes()
    return head + body


def loads_field(data):
    """Inverse of :func:`dumps_field`; boundary and ghosts come back as NaN."""
    if len(data) < _HEADER.size or data[:4] != _MAGIC:
        raise ConfigurationError("not a WGF1 field dump")
    magic, nx, ny, x0, x1, y0, y1, t = _HEADER.unpack_from(data)
    n = nx * ny
    if len(data) != _HEADER.size + 8 * n:
        raise ConfigurationError("WGF1 payload length does not match header")
    interior = np.frombuffer(data, dtype="<f8", count=n, offset=_HEADER.size).reshape(ny, nx)
    domain = make_grid((x0, x1, y0, y1), nx, ny)
    return ScalarField.from_interior(domain, interior, None if math.isnan(t) else t)


def dump_field(u, path):
    with open(path, "wb") as fh:
        fh.write(dumps_field(u))


def load_field(path):
    with open(path, "rb") as fh:
        return loads_field(fh.read())
