"""Boundary-flux homogenization: the harmonic field that carries g.

The moving boundary forces u.eta = g on the fluid.  Solving a Neumann
problem for h with conormal data g and setting rho = grad h produces a
divergence- and curl-free field with rho.eta = g, so v = u - rho is
tangent to the boundary and shares u's vorticity.  Every built-in motion
admits a closed form; the numerical path pulls the Neumann problem back
to the disk and is kept for plug-in motions and as a cross-check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import motion as mo
from .elliptic import solve_neumann
from .grid import Grid, ScalarField, VectorField, gradient, mean_value


@dataclass
class HomogenizationResult:
    """Harmonic extension h (reference samples, zero mean) and its physical
    gradient rho at the reference nodes."""

    h: ScalarField
    rho: VectorField
    source: str


def _sample_physical(m: mo.MotionSpec, t: float, grid: Grid):
    """Physical coordinates of the reference nodes."""
    pts = np.stack([grid.y1, grid.y2], axis=-1)
    x = mo.map_backward(m, pts.reshape(-1, 2), t).reshape(pts.shape)
    return x[..., 0], x[..., 1]


def analytic_rho(m: mo.MotionSpec, t: float, grid: Grid) -> HomogenizationResult:
    """Closed-form h and rho for a built-in motion kind."""
    m.check_time(t)
    x1, x2 = _sample_physical(m, t, grid)
    if m.kind == "identity":
        h = np.zeros_like(x1)
        r1 = np.zeros_like(x1)
        r2 = np.zeros_like(x1)
    elif m.kind == "translation":
        cd = np.asarray(m.params["c_dot"](t), dtype=float)
        h = cd[0] * x1 + cd[1] * x2
        r1 = np.full_like(x1, cd[0])
        r2 = np.full_like(x1, cd[1])
    elif m.kind == "stretch":
        ad = m.params["a_dot"](t)
        h = 0.5 * ad * (x1 ** 2 - x2 ** 2)
        r1 = ad * x1
        r2 = -ad * x2
    elif m.kind == "rotating_ellipse":
        kappa = ellipse_kappa(m, t)
        phi = m.params["phi"](t)
        c, s = np.cos(phi), np.sin(phi)
        b1 = c * x1 + s * x2   # body coordinates
        b2 = -s * x1 + c * x2
        h = kappa * b1 * b2
        g1 = kappa * b2        # body-frame gradient (d/db1, d/db2)
        g2 = kappa * b1
        r1 = c * g1 - s * g2
        r2 = s * g1 + c * g2
    else:
        raise NotImplementedError(
            f"no closed-form homogenization for kind {m.kind!r}; use numerical_rho"
        )
    h_field = ScalarField(grid, h)
    h_field.values -= mean_value(h_field)
    return HomogenizationResult(h=h_field, rho=VectorField(grid, r1, r2), source="analytic")


def ellipse_kappa(m: mo.MotionSpec, t: float) -> float:
    """Strength of the x1*x2 harmonic for the rotating ellipse."""
    ax, ay = m.params["a_x"], m.params["a_y"]
    return m.params["phi_dot"](t) * (ax ** 2 - ay ** 2) / (ax ** 2 + ay ** 2)


def numerical_rho(m: mo.MotionSpec, t: float, grid: Grid,
                  compat_tol: float = 1e-8) -> HomogenizationResult:
    """h from a pulled-back Neumann solve on the reference disk.

    The physical conormal data g becomes g * |dx/dtheta| on the unit circle
    (the same arc factor maps the length elements), and the physical
    gradient is recovered through the chain rule.
    """
    m.check_time(t)
    circ = mo.flux_circulation(m, t, n=max(64, grid.n_theta))
    if abs(circ) > compat_tol:
        raise ValueError(
            "boundary flux violates the zero-circulation compatibility of an "
            f"area-preserving motion: circulation {circ:.3e}"
        )
    md = mo.metric_at(m, (0.0, 0.0), t)
    g_tilde = mo.boundary_flux(m, grid.angles, t) * mo.boundary_arc_factor(m, grid.angles, t)
    h = solve_neumann(md.q_up, ScalarField.zeros(grid), flux=g_tilde)
    grad_ref = gradient(h)
    T = m.forward_matrix(t)
    r1 = T[0, 0] * grad_ref.u1 + T[1, 0] * grad_ref.u2
    r2 = T[0, 1] * grad_ref.u1 + T[1, 1] * grad_ref.u2
    return HomogenizationResult(h=h, rho=VectorField(grid, r1, r2), source="numerical")


def homogenization(m: mo.MotionSpec, t: float, grid: Grid) -> HomogenizationResult:
    """Closed form when available, Neumann solve otherwise."""
    try:
        return analytic_rho(m, t, grid)
    except NotImplementedError:
        return numerical_rho(m, t, grid)


def correction_stream_coefficient(m: mo.MotionSpec, t: float) -> float | None:
    """Coefficient c of the radial stream function c*|y|^2 whose
    perpendicular gradient is the pushforward of rho - V_t.

    rho - V_t is divergence free and tangent to the moving boundary, so
    its pushforward is Hamiltonian on the disk; for the built-in motions
    the stream function is the radial quadratic c*|y|^2 (identically zero
    except for the rotating ellipse).  Returns None for plug-in motions,
    which fall back to interpolated face fluxes in the solver.
    """
    if m.kind in ("identity", "translation", "stretch"):
        return 0.0
    if m.kind == "rotating_ellipse":
        kappa = ellipse_kappa(m, t)
        ax = m.params["a_x"]
        return 0.5 * (kappa - m.params["phi_dot"](t)) * ax ** 2
    return None
