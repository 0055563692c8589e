"""Every quantity the a priori estimates bound, measured on solver states.

The moving-domain estimates are about L^r vorticity norms (non-increasing
for viscous runs with potential forcing), the velocity-gradient norms they
control through the Calderon-Zygmund inequality, and the boundary terms
that ruin the energy balance (the |v|^2 g flux the analysis cannot
control).  Everything is computed on the reference disk, where the
unit-Jacobian map makes the integrals equal to the physical ones.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from . import motion as mo
from .grid import (
    Grid,
    ScalarField,
    VectorField,
    boundary_extrapolate,
    gradient,
    integrate,
)
from .solver import SolverState, vorticity_forcing

R_SET = (1.5, 2.0, 4.0, np.inf)
FINITE_R_SET = (1.5, 2.0, 4.0)

CSV_COLUMNS = ("t", "l1p5", "l2", "l4", "linf", "gv1p5", "gv2", "gv4",
               "cz2", "energy", "bflux", "bc_un", "bc_omega", "circulation")


@dataclass
class DiagnosticsRecord:
    t: float
    lr_norms: dict            # r in {1.5, 2, 4, inf} -> ||omega||_r
    grad_v_norms: dict        # finite r -> ||grad v||_r
    cz_ratio: dict            # finite r -> ||grad v||_r / ||omega||_r
    energy: float             # (1/2) ||u||_2^2
    boundary_flux_term: float  # contour integral of (|v|^2/2) g ds
    bc_u_normal: float        # max |u.eta - g| on the moving boundary
    bc_omega: float           # max |omega| trace on the boundary
    circulation: float        # integral of omega

    def check_finite(self):
        vals = [self.t, self.energy, self.boundary_flux_term, self.bc_u_normal,
                self.bc_omega, self.circulation]
        vals += list(self.lr_norms.values()) + list(self.grad_v_norms.values())
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("diagnostics record contains NaN or Inf")


def _physical_gradients(field_values: np.ndarray, grid: Grid, T: np.ndarray):
    """(d/dx1, d/dx2) of a physical-component field sampled at reference nodes."""
    gr = gradient(ScalarField(grid, field_values))
    return (T[0, 0] * gr.u1 + T[1, 0] * gr.u2,
            T[0, 1] * gr.u1 + T[1, 1] * gr.u2)


def record(state: SolverState, rho: VectorField | None = None) -> DiagnosticsRecord:
    """Measure one state; rho defaults to the state's own homogenizing field."""
    g, m, t = state.grid, state.motion, state.t
    rho = rho if rho is not None else state.rho
    T = m.forward_matrix(t)

    lr = {r: integrate(state.omega, r) for r in R_SET}

    v1 = state.u_phys.u1 - rho.u1
    v2 = state.u_phys.u2 - rho.u2
    dv = [_physical_gradients(comp, g, T) for comp in (v1, v2)]
    grad_mag = np.sqrt(sum(d1 ** 2 + d2 ** 2 for d1, d2 in dv))
    grad_field = ScalarField(g, grad_mag)
    gv = {r: integrate(grad_field, r) for r in FINITE_R_SET}
    cz = {r: (gv[r] / lr[r] if lr[r] > 0 else 0.0) for r in FINITE_R_SET}

    energy = 0.5 * float(np.sum((state.u_phys.u1 ** 2 + state.u_phys.u2 ** 2) * g.cell_area))

    theta = g.angles
    g_bnd = mo.boundary_flux(m, theta, t)
    arc = mo.boundary_arc_factor(m, theta, t)
    normal = mo.boundary_normal(m, theta, t)
    v1_b = boundary_extrapolate(g, v1)
    v2_b = boundary_extrapolate(g, v2)
    u1_b = boundary_extrapolate(g, state.u_phys.u1)
    u2_b = boundary_extrapolate(g, state.u_phys.u2)
    speed2 = v1_b ** 2 + v2_b ** 2
    bflux = float(np.sum(0.5 * speed2 * g_bnd * arc) * g.dtheta)
    u_dot_n = u1_b * normal[:, 0] + u2_b * normal[:, 1]
    bc_un = float(np.max(np.abs(u_dot_n - g_bnd)))
    bc_omega = float(np.max(np.abs(boundary_extrapolate(g, state.omega.values))))

    circulation = float(np.sum(state.omega.values * g.cell_area))

    rec = DiagnosticsRecord(
        t=t, lr_norms=lr, grad_v_norms=gv, cz_ratio=cz, energy=energy,
        boundary_flux_term=bflux, bc_u_normal=bc_un, bc_omega=bc_omega,
        circulation=circulation,
    )
    rec.check_finite()
    return rec


# ---------------------------------------------------------------------------
# monotonicity verdicts
# ---------------------------------------------------------------------------

@dataclass
class MonotonicityVerdict:
    r: float
    passed: bool
    worst_ratio: float
    first_violation: int | None   # index into the series, None if clean


def monotonicity_report(series: Sequence[DiagnosticsRecord],
                        slack: float = 1e-10) -> dict:
    """Per-exponent check that ||omega(t_{k+1})||_r <= ||omega(t_k)||_r (1+slack)."""
    out = {}
    for r in R_SET:
        worst = 0.0
        first = None
        for k in range(1, len(series)):
            prev = series[k - 1].lr_norms[r]
            cur = series[k].lr_norms[r]
            ratio = cur / prev if prev > 0 else (0.0 if cur == 0 else np.inf)
            worst = max(worst, ratio)
            if ratio > 1.0 + slack and first is None:
                first = k
        out[r] = MonotonicityVerdict(r=r, passed=first is None,
                                     worst_ratio=worst, first_violation=first)
    return out


# ---------------------------------------------------------------------------
# weak-formulation residuals
# ---------------------------------------------------------------------------

@dataclass
class TestField:
    """Divergence-free tangent test field given through its stream function
    and its (analytically sampled) perpendicular gradient, with a C^1 time
    profile vanishing at the final time."""

    stream: ScalarField
    theta: VectorField
    profile: Callable[[float], float]
    profile_dot: Callable[[float], float]


def make_test_field(grid: Grid, t_final: float, power: int = 2,
                    modulation: str = "none") -> TestField:
    """Polynomial stream vanishing to second order at r = 1, its exact
    perpendicular gradient, and the linear profile h(t) = 1 - t/T."""
    if power < 2:
        raise ValueError("the stream must vanish to second order at r = 1")
    y1, y2 = grid.y1, grid.y2
    r2 = y1 ** 2 + y2 ** 2
    base = (1.0 - r2) ** power
    dbase = -2.0 * power * (1.0 - r2) ** (power - 1)
    if modulation == "none":
        vals = base
        d1 = dbase * y1
        d2 = dbase * y2
    elif modulation == "linear":
        mod = 1.0 + 0.5 * y1
        vals = base * mod
        d1 = dbase * y1 * mod + base * 0.5
        d2 = dbase * y2 * mod
    else:
        raise ValueError(f"unknown modulation {modulation!r}")
    return TestField(
        stream=ScalarField(grid, vals),
        theta=VectorField(grid, -d2, d1),
        profile=lambda t: 1.0 - t / t_final,
        profile_dot=lambda t: -1.0 / t_final,
    )


def _check_tangent(theta: VectorField, rel_tol: float = 1e-2):
    # catches genuinely non-tangent fields (O(1) relative trace); the
    # extrapolated trace of an admissible field carries O(h^3) dust
    g = theta.grid
    cos = np.cos(g.angles)[None, :]
    sin = np.sin(g.angles)[None, :]
    radial = boundary_extrapolate(g, cos * theta.u1 + sin * theta.u2)
    worst = float(np.max(np.abs(radial)))
    scale = max(float(np.max(np.hypot(theta.u1, theta.u2))), 1e-300)
    if worst > rel_tol * scale:
        raise ValueError(
            f"test field is not tangent to the boundary: max |theta.eta| = {worst:.3e} "
            f"against field scale {scale:.3e}"
        )


def _advect(w1, w2, grads):
    """(w.grad) of a component given its precomputed gradient pair."""
    return w1 * grads[0] + w2 * grads[1]


class WeakFormAccumulator:
    """Streams solver states through the time-integrated weak form.

    form = "reference": pairings in transformed variables with the metric
    weight and the M operator acting on the test field (the inviscid weak
    solution identity); include_viscous adds the metric gradient pairing
    scaled by nu, turning it into the viscous identity.
    form = "physical": the same content written as plain moving-domain
    pairings with a time-dependent test field.

    Feed every step in order (trapezoidal time quadrature); the two forms
    agree up to discretization error, which tests the change of variables
    itself.
    """

    def __init__(self, test: TestField, form: str = "reference",
                 include_viscous: bool | None = None):
        if form not in ("reference", "physical"):
            raise ValueError(f"unknown weak form {form!r}")
        _check_tangent(test.theta)
        self.test = test
        self.form = form
        self.include_viscous = include_viscous
        self._dtheta = None
        self._prev = None          # (t, integrand value)
        self._integral = 0.0
        self._init_pairing = None

    def add(self, s: SolverState):
        test = self.test
        g, m, t = s.grid, s.motion, s.t
        nu = s.nu
        viscous = nu > 0.0 if self.include_viscous is None else self.include_viscous
        theta = test.theta
        if self._dtheta is None:
            self._dtheta = [gradient(ScalarField(g, theta.u1)),
                            gradient(ScalarField(g, theta.u2))]
        dtheta = self._dtheta
        area = g.cell_area
        h = test.profile(t)
        h_dot = test.profile_dot(t)
        T = m.forward_matrix(t)
        S = m.inverse_matrix(t)
        S_dot = m.inverse_matrix_dt(t)
        md = mo.metric_at(m, (0.0, 0.0), t)
        v1 = s.u_phys.u1 - s.rho.u1
        v2 = s.u_phys.u2 - s.rho.u2
        pts = np.stack([g.y1, g.y2], axis=-1).reshape(-1, 2)
        vel = mo.material_velocity(m, pts, t).reshape(g.n_r, g.n_theta, 2)
        # dy/dt at fixed y: minus the pushforward of the material velocity
        w1 = -(T[0, 0] * vel[..., 0] + T[0, 1] * vel[..., 1])
        w2 = -(T[1, 0] * vel[..., 0] + T[1, 1] * vel[..., 1])

        def pair(a1, a2, b1, b2, weight=None):
            if weight is None:
                return float(np.sum((a1 * b1 + a2 * b2) * area))
            w11, w12, w22 = weight
            return float(np.sum((w11 * a1 * b1 + w12 * (a1 * b2 + a2 * b1)
                                 + w22 * a2 * b2) * area))

        if self.form == "reference":
            vt1 = T[0, 0] * v1 + T[0, 1] * v2          # pushforward of v
            vt2 = T[1, 0] * v1 + T[1, 1] * v2
            rt1 = T[0, 0] * s.rho.u1 + T[0, 1] * s.rho.u2
            rt2 = T[1, 0] * s.rho.u1 + T[1, 1] * s.rho.u2
            qd = md.q_down
            weight = (qd[0, 0], qd[0, 1], qd[1, 1])
            # M theta = (dy/dt . grad) theta + T dS/dt theta
            TS = T @ S_dot
            m1 = (_advect(w1, w2, (dtheta[0].u1, dtheta[0].u2))
                  + TS[0, 0] * theta.u1 + TS[0, 1] * theta.u2)
            m2 = (_advect(w1, w2, (dtheta[1].u1, dtheta[1].u2))
                  + TS[1, 0] * theta.u1 + TS[1, 1] * theta.u2)
            dvt = [gradient(ScalarField(g, vt1)), gradient(ScalarField(g, vt2))]
            drt = [gradient(ScalarField(g, rt1)), gradient(ScalarField(g, rt2))]
            n1 = (_advect(rt1, rt2, (dvt[0].u1, dvt[0].u2))
                  + _advect(vt1, vt2, (drt[0].u1, drt[0].u2))
                  + _advect(vt1, vt2, (dvt[0].u1, dvt[0].u2)))
            n2 = (_advect(rt1, rt2, (dvt[1].u1, dvt[1].u2))
                  + _advect(vt1, vt2, (drt[1].u1, drt[1].u2))
                  + _advect(vt1, vt2, (dvt[1].u1, dvt[1].u2)))
            val = (-h_dot * pair(vt1, vt2, theta.u1, theta.u2, weight)
                   - h * pair(vt1, vt2, m1, m2, weight)
                   + h * pair(n1, n2, theta.u1, theta.u2, weight))
            if viscous and nu > 0.0:
                # metric gradient pairing: q_down_{ij} q_up^{kl} d_k vt_i d_l th_j
                qu = md.q_up
                term = np.zeros_like(v1)
                dvs = [(dvt[0].u1, dvt[0].u2), (dvt[1].u1, dvt[1].u2)]
                dts = [(dtheta[0].u1, dtheta[0].u2), (dtheta[1].u1, dtheta[1].u2)]
                for i in range(2):
                    for j in range(2):
                        for k in range(2):
                            for el in range(2):
                                term = term + qd[i, j] * qu[k, el] * dvs[i][k] * dts[j][el]
                val += nu * h * float(np.sum(term * area))
            if self._init_pairing is None:
                self._init_pairing = h * pair(vt1, vt2, theta.u1, theta.u2, weight)
        else:
            # theta_phys = h(t) S theta evaluated at the reference nodes
            th1 = S[0, 0] * theta.u1 + S[0, 1] * theta.u2
            th2 = S[1, 0] * theta.u1 + S[1, 1] * theta.u2
            # d/dt of S theta at fixed x: dS/dt theta + S (dy/dt . grad) theta
            a1 = _advect(w1, w2, (dtheta[0].u1, dtheta[0].u2))
            a2 = _advect(w1, w2, (dtheta[1].u1, dtheta[1].u2))
            dth1 = (S_dot[0, 0] * theta.u1 + S_dot[0, 1] * theta.u2
                    + S[0, 0] * a1 + S[0, 1] * a2)
            dth2 = (S_dot[1, 0] * theta.u1 + S_dot[1, 1] * theta.u2
                    + S[1, 0] * a1 + S[1, 1] * a2)
            dt_th1 = h_dot * th1 + h * dth1
            dt_th2 = h_dot * th2 + h * dth2
            dv = [_physical_gradients(v1, g, T), _physical_gradients(v2, g, T)]
            drho = [_physical_gradients(s.rho.u1, g, T),
                    _physical_gradients(s.rho.u2, g, T)]
            # the advective pairing carries (v.grad)rho as well: the change
            # of dependent variables produces it alongside (rho.grad)v, and
            # only their sum has the curl that the vorticity equation solves
            adv1 = (_advect(v1, v2, dv[0]) + _advect(s.rho.u1, s.rho.u2, dv[0])
                    + _advect(v1, v2, drho[0]))
            adv2 = (_advect(v1, v2, dv[1]) + _advect(s.rho.u1, s.rho.u2, dv[1])
                    + _advect(v1, v2, drho[1]))
            val = (-pair(v1, v2, dt_th1, dt_th2)
                   + h * pair(adv1, adv2, th1, th2))
            if viscous and nu > 0.0:
                dth_x = [_physical_gradients(th1, g, T), _physical_gradients(th2, g, T)]
                term = sum(dv[i][k] * dth_x[i][k] for i in range(2) for k in range(2))
                val += nu * h * float(np.sum(term * area))
            if self._init_pairing is None:
                self._init_pairing = h * pair(v1, v2, th1, th2)

        curlf = vorticity_forcing(s.forcing, m, t, g)
        val -= h * float(np.sum(test.stream.values * curlf.values * area))

        if self._prev is not None:
            t_prev, val_prev = self._prev
            self._integral += 0.5 * (val + val_prev) * (t - t_prev)
        self._prev = (t, val)

    def result(self) -> float:
        if self._prev is None or self._init_pairing is None:
            raise ValueError("weak residual needs at least two states")
        return abs(self._integral - self._init_pairing)


def weak_residual(trajectory: Sequence[SolverState], test: TestField,
                  form: str = "reference",
                  include_viscous: bool | None = None) -> float:
    """Absolute defect of the time-integrated weak formulation over a
    stored trajectory (see WeakFormAccumulator for the streaming version)."""
    if len(trajectory) < 2:
        raise ValueError("weak residual needs at least two states")
    acc = WeakFormAccumulator(test, form=form, include_viscous=include_viscous)
    for s in trajectory:
        acc.add(s)
    return acc.result()


# ---------------------------------------------------------------------------
# CSV stream and plot stub
# ---------------------------------------------------------------------------

def record_to_row(rec: DiagnosticsRecord) -> str:
    vals = (rec.t,
            rec.lr_norms[1.5], rec.lr_norms[2.0], rec.lr_norms[4.0], rec.lr_norms[np.inf],
            rec.grad_v_norms[1.5], rec.grad_v_norms[2.0], rec.grad_v_norms[4.0],
            rec.cz_ratio[2.0], rec.energy, rec.boundary_flux_term,
            rec.bc_u_normal, rec.bc_omega, rec.circulation)
    return ",".join(format(v, ".17g") for v in vals)


def write_csv(records: Sequence[DiagnosticsRecord], path):
    with open(path, "w", newline="") as fh:
        fh.write(",".join(CSV_COLUMNS) + "\n")
        for rec in records:
            fh.write(record_to_row(rec) + "\n")


class DiagnosticsWriter:
    """Streaming CSV writer with the pinned column order."""

    def __init__(self, path):
        self._fh = open(path, "w", newline="")
        self._fh.write(",".join(CSV_COLUMNS) + "\n")

    def write(self, rec: DiagnosticsRecord):
        self._fh.write(record_to_row(rec) + "\n")

    def close(self):
        self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()


def gnuplot_stub(csv_path, out_path):
    """Emit a small gnuplot script for the diagnostics stream (convenience)."""
    script = io.StringIO()
    script.write("set datafile separator ','\n")
    script.write("set key autotitle columnhead\n")
    script.write("set xlabel 't'\n")
    script.write(f"plot '{csv_path}' using 1:3 with lines title 'l2', \\\n")
    script.write(f"     '{csv_path}' using 1:10 with lines title 'energy'\n")
    with open(out_path, "w") as fh:
        fh.write(script.getvalue())
