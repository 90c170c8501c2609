"""Named initial data and boundary data used by scenarios and tests.

Every preset is a pair of vectorized callables ``value(X, Y)`` and
``grad(X, Y) -> (u_x, u_y)`` so that clamped data can be taken from the
exact trace and normal derivative.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import ConfigurationError
from .grid import BoundaryData, ScalarField


@dataclass(frozen=True)
class Preset:
    name: str
    value: Callable
    grad: Callable
    compact: bool = False  # vanishes to first order on the boundary of the grid

    def field(self, domain, time=None):
        return ScalarField.from_function(domain, self.value, time)

    def boundary(self, domain):
        return BoundaryData.from_functions(domain, self.value, self.grad)


def _zero():
    return Preset("zero", lambda X, Y: np.zeros_like(X), lambda X, Y: (np.zeros_like(X), np.zeros_like(X)), True)


def _plane(a=0.0, b=0.0, c=0.0):
    return Preset("plane", lambda X, Y: a * X + b * Y + c,
                  lambda X, Y: (np.full_like(X, a), np.full_like(X, b)))


def _gaussian(amplitude, cx, cy, width):
    def value(X, Y):
        return amplitude * np.exp(-((X - cx) ** 2 + (Y - cy) ** 2) / width ** 2)

    def grad(X, Y):
        g = value(X, Y) * (-2.0 / width ** 2)
        return g * (X - cx), g * (Y - cy)

    return Preset("gaussian", value, grad)


def _bump(amplitude, cx, cy, width):
    """``A exp(1 - 1/(1 - r^2/w^2))`` for ``r < w``, zero outside; peak ``A``."""

    def parts(X, Y):
        s = ((X - cx) ** 2 + (Y - cy) ** 2) / width ** 2
        inside = s < 1.0
        den = np.where(inside, 1.0 - s, 1.0)
        v = np.where(inside, amplitude * np.exp(1.0 - 1.0 / den), 0.0)
        return v, den, inside

    def value(X, Y):
        return parts(X, Y)[0]

    def grad(X, Y):
        v, den, inside = parts(X, Y)
        g = np.where(inside, -2.0 * v / (den * den * width ** 2), 0.0)
        return g * (X - cx), g * (Y - cy)

    return Preset("bump", value, grad, True)


def _clamped_bump(amplitude, x0, x1, y0, y1):
    """``A sin^2(pi (x-x0)/Lx) sin^2(pi (y-y0)/Ly)``: zero value and slope on the rectangle."""
    kx, ky = math.pi / (x1 - x0), math.pi / (y1 - y0)

    def value(X, Y):
        return amplitude * np.sin(kx * (X - x0)) ** 2 * np.sin(ky * (Y - y0)) ** 2

    def grad(X, Y):
        sx, sy = np.sin(kx * (X - x0)), np.sin(ky * (Y - y0))
        return (amplitude * kx * np.sin(2 * kx * (X - x0)) * sy ** 2,
                amplitude * ky * np.sin(2 * ky * (Y - y0)) * sx ** 2)

    return Preset("clamped_bump", value, grad, True)


def _smoothstep(s):
    """C-infinity step from 0 (s <= 0) to 1 (s >= 1)."""
    s = np.clip(s, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(s > 0, np.exp(-1.0 / np.where(s > 0, s, 1.0)), 0.0)
        b = np.where(s < 1, np.exp(-1.0 / np.where(s < 1, 1.0 - s, 1.0)), 0.0)
    return a / (a + b)


def plateau(y, y0, y1, margin=0.05, ramp=0.2):
    """Smooth profile equal to 1 away from ``[y0, y1]``'s ends and flat 0 near them."""
    L = y1 - y0
    a, b = y0 + margin * L, y0 + (margin + ramp) * L
    return _smoothstep((y - a) / (b - a)) * _smoothstep((y1 - a + y0 - y) / (b - a))


def _tent(amplitude, cx, halfwidth, y0, y1):
    """Ridge tent ``A (1 - |x - cx|/w)_+ p(y)`` with a smooth plateau ``p``.

    Lipschitz, with three straight kinks in ``x``; it vanishes with its
    slope on the boundary as long as ``[cx - w, cx + w]`` lies inside.
    """

    def value(X, Y):
        return amplitude * np.maximum(0.0, 1.0 - np.abs(X - cx) / halfwidth) * plateau(Y, y0, y1)

    def grad(X, Y):
        # Only evaluated on the boundary, where the tent is flat.
        return np.zeros_like(X), np.zeros_like(X)

    return Preset("tent", value, grad, True)


def _cap(radius, cx, cy):
    """Upper spherical cap ``sqrt(R^2 - |x - c|^2)``; ``H = -2/R``."""

    def value(X, Y):
        return np.sqrt(radius ** 2 - (X - cx) ** 2 - (Y - cy) ** 2)

    def grad(X, Y):
        v = value(X, Y)
        return -(X - cx) / v, -(Y - cy) / v

    return Preset("cap", value, grad)


PRESETS = ("zero", "plane", "bump", "gaussian", "clamped_bump", "tent", "cap")


def make_preset(name, domain, amplitude=0.01, center_x=None, center_y=None, width=0.3,
                a=0.0, b=0.0, c=0.0, radius=None):
    """Build a named preset; centers default to the middle of ``domain``."""
    cx = 0.5 * (domain.x0 + domain.x1) if center_x is None else center_x
    cy = 0.5 * (domain.y0 + domain.y1) if center_y is None else center_y
    if name == "zero":
        return _zero()
    if name == "plane":
        return _plane(a, b, c)
    if name == "gaussian":
        return _gaussian(amplitude, cx, cy, width)
    if name == "bump":
        if not (domain.x0 < cx - width and cx + width < domain.x1
                and domain.y0 < cy - width and cy + width < domain.y1):
            raise ConfigurationError("bump support must lie inside the domain")
        return _bump(amplitude, cx, cy, width)
    if name == "clamped_bump":
        return _clamped_bump(amplitude, domain.x0, domain.x1, domain.y0, domain.y1)
    if name == "tent":
        if not (domain.x0 < cx - width and cx + width < domain.x1):
            raise ConfigurationError("tent support must lie inside the domain")
        return _tent(amplitude, cx, width, domain.y0, domain.y1)
    if name == "cap":
        if radius is None:
            raise ConfigurationError("cap needs a radius")
        g = domain.ghost * domain.h
        reach = math.hypot(max(cx - domain.x0, domain.x1 - cx) + g, max(cy - domain.y0, domain.y1 - cy) + g)
        if radius <= reach:
            raise ConfigurationError(f"cap radius {radius:g} does not cover the grid (need > {reach:.4g})")
        return _cap(radius, cx, cy)
    raise ConfigurationError(f"unknown preset {name!r}; known: {', '.join(PRESETS)}")
