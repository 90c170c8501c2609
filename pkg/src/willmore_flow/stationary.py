"""Damped Newton solver for the clamped stationary Willmore equation.

Solves ``Delta_Gamma H + 2H(H^2/4 - K) = 0`` on interior nodes with the
boundary data imposed through the ghost layers.  The Jacobian is built by
central finite differences of the residual itself, 25 colored probes at a
time, so the solver shares no linearization code with the flow.
"""
from __future__ import annotations

import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ConfigurationError, NonConvergenceError, NumericalError
from .geometry import willmore_operator
from .grid import ScalarField, apply_clamped_ghosts, probe_colors

DAMPING_FLOOR = 2.0 ** -20


@dataclass(frozen=True)
class NewtonConfig:
    max_iters: int = 30
    tol: float = 1e-9
    damping: float = 1.0
    fd_eps: float = 1e-6

    def __post_init__(self):
        if not self.tol > 0:
            raise ConfigurationError("Newton tol must be positive")
        if not 0 < self.damping <= 1:
            raise ConfigurationError("damping must lie in (0, 1]")
        if self.max_iters < 1:
            raise ConfigurationError("max_iters must be >= 1")
        if not self.fd_eps > 0:
            raise ConfigurationError("fd_eps must be positive")


def residual_stationary(u, bc):
    """Willmore operator of ``u`` with ghosts from ``bc``; only interior nodes are meaningful."""
    return willmore_operator(apply_clamped_ghosts(u, bc))


def _residual_vec(x, domain, bc):
    u = ScalarField.from_interior(domain, x.reshape(domain.ny, domain.nx))
    return residual_stationary(u, bc).interior.ravel()


def fd_jacobian(x, domain, bc, eps):
    """Sparse Jacobian of the interior residual by colored central differences."""
    n = domain.n_interior
    rows, cols, vals = [], [], []
    allrows = np.arange(n)
    for mask, src, valid in probe_colors(domain):
        e = eps * mask.ravel().astype(float)
        col = (_residual_vec(x + e, domain, bc) - _residual_vec(x - e, domain, bc)) / (2.0 * eps)
        keep = valid & (col != 0.0)
        rows.append(allrows[keep])
        cols.append(src[keep])
        vals.append(col[keep])
    return sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(n, n))


def history_csv(history):
    buf = io.StringIO()
    buf.write("iter,res_inf,step_fraction\n")
    for it, r, s in history:
        buf.write(f"{it},{r:.17g},{s:.17g}\n")
    return buf.getvalue()


def solve_stationary(bc, u_init, cfg=NewtonConfig(), return_history=False):
    """Newton iteration from ``u_init`` (its boundary values are replaced by ``bc``).

    Each step halves the step fraction, starting at ``cfg.damping``, until
    the residual max-norm decreases; below ``2**-20`` the solve fails.
    History rows are ``(iter, res_inf, step_fraction)``.
    """
    d = bc.domain
    if u_init.domain != d:
        raise ConfigurationError("initial guess and boundary data live on different grids")
    x = np.array(u_init.interior, dtype=float).ravel()
    F = _residual_vec(x, d, bc)
    r = float(np.max(np.abs(F)))
    history = [(0, r, 0.0)]
    it = 0
    while r >= cfg.tol:
        if it >= cfg.max_iters:
            raise NonConvergenceError(f"Newton stalled at residual {r:.3e} after {it} iterations", history)
        it += 1
        J = fd_jacobian(x, d, bc, cfg.fd_eps)
        try:
            dx = spla.splu(J).solve(-F)
        except RuntimeError as exc:
            raise NumericalError(f"singular Newton Jacobian: {exc}", iterations=it, residual=r) from exc
        if not np.all(np.isfinite(dx)):
            raise NumericalError("non-finite Newton update", iterations=it, residual=r)
        lam = cfg.damping
        while True:
            xn = x + lam * dx
            Fn = _residual_vec(xn, d, bc)
            rn = float(np.max(np.abs(Fn)))
            if np.isfinite(rn) and rn < r:
                break
            lam *= 0.5
            if lam < DAMPING_FLOOR:
                history.append((it, r, lam))
                raise NonConvergenceError(f"line search failed at residual {r:.3e}", history)
        x, F, r = xn, Fn, rn
        history.append((it, r, lam))
    u = apply_clamped_ghosts(ScalarField.from_interior(d, x.reshape(d.ny, d.nx)), bc)
    return (u, history) if return_history else u
