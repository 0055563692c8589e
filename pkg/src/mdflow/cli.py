"""Command-line entry point: parse run configurations and dispatch runs.

Configurations are flat `section.key = value` text files (see README for
the full key list).  A run writes a diagnostics CSV stream, optional
field snapshots, and for viscosity families the family report; the exit
status encodes the outcome: 0 all enabled invariant checks passed,
1 invariant failure, 2 configuration error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import dataclass, field

import numpy as np

from . import motion as mo
from .diagnostics import DiagnosticsWriter, gnuplot_stub, monotonicity_report, record
from .elliptic import EllipticError
from .expressions import ExpressionError, TimeFunction
from .grid import Grid, read_snapshot, write_snapshot
from .harness import Scenario, run_family, write_family_report
from .solver import (
    CFLError,
    INITIAL_PRESETS,
    StepConfig,
    boundary_tangency_residual,
    create_state,
    initial_condition,
    mollify_initial,
    step,
)

EXIT_OK = 0
EXIT_INVARIANT = 1
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3

MOTION_KINDS = mo.BUILTIN_KINDS


class ConfigError(ValueError):
    """Carries every validation error found in a config file."""

    def __init__(self, errors):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


@dataclass
class RunConfig:
    scenario_id: str = "run"
    motion_kind: str = "identity"
    motion_params: dict = field(default_factory=dict)
    n_r: int = 128
    n_theta: int = 256
    nu: float | None = 0.01
    nu_list: list | None = None
    t_final: float = 1.0
    dt: float = 1e-3
    cfl_limit: float = 0.4
    forcing: str = "potential"
    advection: str = "upwind_muscl"
    diffusion: str = "backward_euler"
    mollify: bool = False
    preset: str = "bessel_mode"
    amplitude: float = 1.0
    center: tuple = (0.0, 0.0)
    radius: float = 0.5
    power: int = 2
    snapshot_path: str | None = None
    out_dir: str = "out"
    snapshot_every: int = 0
    diagnostics: bool = True

    @property
    def is_family(self) -> bool:
        return self.nu_list is not None


_KNOWN_KEYS = {
    "scenario.id", "motion.kind", "motion.cx", "motion.cy", "motion.a",
    "motion.ax", "motion.phi", "grid.n_r", "grid.n_theta", "physics.nu",
    "physics.nu_list", "physics.T", "physics.dt", "physics.cfl",
    "physics.forcing", "physics.advection", "physics.diffusion",
    "physics.mollify", "initial.preset", "initial.amplitude",
    "initial.center", "initial.radius", "initial.power", "initial.snapshot",
    "output.directory", "output.snapshot_every", "output.diagnostics",
}


def parse_config(text: str) -> RunConfig:
    """Parse and validate; raises ConfigError listing every problem found."""
    errors = []
    raw = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            errors.append(f"line {lineno}: expected key = value")
            continue
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _KNOWN_KEYS:
            errors.append(f"line {lineno}: unknown key {key!r}")
            continue
        if key in raw:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        raw[key] = (value.strip().strip('"'), lineno)

    cfg = RunConfig()

    def take(key, convert, attr=None, check=None, what=""):
        if key not in raw:
            return
        value, lineno = raw.pop(key)
        try:
            converted = convert(value)
        except (ValueError, ExpressionError) as exc:
            errors.append(f"line {lineno}: bad value for {key}: {exc}")
            return
        if check is not None:
            problem = check(converted)
            if problem:
                errors.append(f"line {lineno}: {key} {problem}")
                return
        setattr(cfg, attr or key.split(".")[-1], converted)

    def to_bool(v):
        lv = v.lower()
        if lv in ("true", "yes", "1", "on"):
            return True
        if lv in ("false", "no", "0", "off"):
            return False
        raise ValueError(f"expected a boolean, got {v!r}")

    def to_pair(v):
        parts = [float(p) for p in v.split(",")]
        if len(parts) != 2:
            raise ValueError("expected two comma-separated numbers")
        return tuple(parts)

    take("scenario.id", str, "scenario_id")
    take("motion.kind", str, "motion_kind",
         check=lambda k: None if k in MOTION_KINDS else
         f"unknown motion kind {k!r} (choose from {', '.join(MOTION_KINDS)})")
    take("grid.n_r", int, "n_r",
         check=lambda n: None if 8 <= n <= 4096 else "must be in [8, 4096]")
    take("grid.n_theta", int, "n_theta",
         check=lambda n: None if 8 <= n <= 4096 and n % 2 == 0
         else "must be even and in [8, 4096]")
    take("physics.nu", float, "nu",
         check=lambda v: None if v >= 0 else "must be nonnegative")
    take("physics.T", float, "t_final",
         check=lambda v: None if v > 0 else "must be positive")
    take("physics.dt", float, "dt",
         check=lambda v: None if v > 0 else "must be positive")
    take("physics.cfl", float, "cfl_limit",
         check=lambda v: None if 0 < v <= 1 else "must be in (0, 1]")
    take("physics.forcing", str, "forcing",
         check=lambda v: None if v == "potential" else
         "only 'potential' forcing is configurable (explicit curl fields are API-level)")
    take("physics.advection", str, "advection",
         check=lambda v: None if v in ("upwind_muscl", "central_rk2")
         else "must be upwind_muscl or central_rk2")
    take("physics.diffusion", str, "diffusion",
         check=lambda v: None if v in ("backward_euler", "crank_nicolson")
         else "must be backward_euler or crank_nicolson")
    take("physics.mollify", to_bool, "mollify")
    take("initial.preset", str, "preset",
         check=lambda v: None if v in INITIAL_PRESETS else
         f"unknown preset {v!r} (choose from {', '.join(INITIAL_PRESETS)})")
    take("initial.amplitude", float, "amplitude")
    take("initial.center", to_pair, "center")
    take("initial.radius", float, "radius",
         check=lambda v: None if v > 0 else "must be positive")
    take("initial.power", int, "power",
         check=lambda v: None if v >= 1 else "must be at least 1")
    take("initial.snapshot", str, "snapshot_path")
    take("output.directory", str, "out_dir")
    take("output.snapshot_every", int, "snapshot_every",
         check=lambda v: None if v >= 0 else "must be nonnegative")
    take("output.diagnostics", to_bool, "diagnostics")

    if "physics.nu_list" in raw:
        value, lineno = raw.pop("physics.nu_list")
        try:
            nus = [float(p) for p in value.split(",")]
            if len(nus) < 1 or any(v <= 0 for v in nus):
                raise ValueError("entries must be positive")
            if any(a <= b for a, b in zip(nus, nus[1:])):
                raise ValueError("entries must be strictly decreasing")
            cfg.nu_list = nus
        except ValueError as exc:
            errors.append(f"line {lineno}: bad value for physics.nu_list: {exc}")

    # motion parameter expressions, with analytic derivatives
    for key in ("motion.cx", "motion.cy", "motion.a", "motion.phi"):
        if key in raw:
            value, lineno = raw.pop(key)
            try:
                fn = TimeFunction(value)
                fn.dot(0.0)  # force the derivative to exist now
                cfg.motion_params[key.split(".")[1]] = fn
            except ExpressionError as exc:
                errors.append(f"line {lineno}: bad expression for {key}: {exc}")
    if "motion.ax" in raw:
        value, lineno = raw.pop("motion.ax")
        try:
            ax = float(value)
            if ax <= 0:
                raise ValueError("must be positive")
            cfg.motion_params["ax"] = ax
        except ValueError as exc:
            errors.append(f"line {lineno}: bad value for motion.ax: {exc}")

    kind = cfg.motion_kind
    params = cfg.motion_params
    if kind == "translation" and not ("cx" in params and "cy" in params):
        errors.append("translation motion needs motion.cx and motion.cy")
    if kind == "stretch" and "a" not in params:
        errors.append("stretch motion needs motion.a")
    if kind == "rotating_ellipse" and not ("ax" in params and "phi" in params):
        errors.append("rotating_ellipse motion needs motion.ax and motion.phi")

    if errors:
        raise ConfigError(errors)
    return cfg


def build_motion(cfg: RunConfig) -> mo.MotionSpec:
    horizon = cfg.t_final * (1.0 + 1e-9) + 1e-12
    kind = cfg.motion_kind
    p = cfg.motion_params
    if kind == "identity":
        return mo.identity_motion(horizon)
    if kind == "translation":
        cx, cy = p["cx"], p["cy"]
        return mo.translation_motion(
            lambda t: np.array([cx(t), cy(t)]),
            lambda t: np.array([cx.dot(t), cy.dot(t)]),
            horizon,
        )
    if kind == "stretch":
        a = p["a"]
        return mo.stretch_motion(a, a.dot, horizon)
    if kind == "rotating_ellipse":
        phi = p["phi"]
        return mo.rotating_ellipse_motion(p["ax"], phi, phi.dot, horizon)
    raise AssertionError(f"unhandled kind {kind}")


def build_initial(cfg: RunConfig, grid: Grid):
    if cfg.snapshot_path:
        field_in, _ = read_snapshot(cfg.snapshot_path)
        if field_in.grid != grid:
            raise ConfigError([
                f"snapshot grid {field_in.grid} does not match configured grid {grid}"
            ])
        return field_in
    return initial_condition(cfg.preset, grid, amplitude=cfg.amplitude,
                             center=cfg.center, radius=cfg.radius, power=cfg.power)


def run(cfg: RunConfig, quiet: bool = False) -> int:
    """Execute a config; deterministic outputs, exit status per module docs."""
    def say(msg):
        if not quiet:
            print(msg)

    os.makedirs(cfg.out_dir, exist_ok=True)
    try:
        m = build_motion(cfg)
        grid = Grid(cfg.n_r, cfg.n_theta)
        omega0 = build_initial(cfg, grid)
    except ConfigError as exc:
        for e in exc.errors:
            say(f"config error: {e}")
        return EXIT_CONFIG

    try:
        if cfg.is_family:
            return _run_family(cfg, m, grid, omega0, say)
        return _run_single(cfg, m, grid, omega0, say)
    except (CFLError, EllipticError, FloatingPointError) as exc:
        say(f"numerical failure in scenario {cfg.scenario_id!r}: {exc}")
        return EXIT_NUMERICAL


def _run_single(cfg, m, grid, omega0, say) -> int:
    step_cfg = StepConfig(dt=cfg.dt, cfl_limit=cfg.cfl_limit,
                          advection_scheme=cfg.advection,
                          diffusion_scheme=cfg.diffusion)
    if cfg.mollify and cfg.nu > 0:
        omega0 = mollify_initial(omega0, cfg.nu, m)
    state = create_state(m, grid, omega0, cfg.nu, forcing=cfg.forcing)

    csv_path = os.path.join(cfg.out_dir, f"{cfg.scenario_id}_diagnostics.csv")
    records = []
    writer = DiagnosticsWriter(csv_path) if cfg.diagnostics else None
    tangency_bound = 5.0 / cfg.n_r ** 2
    worst_tangency = 0.0
    k = 0

    def emit(s):
        nonlocal worst_tangency
        rec = record(s)
        records.append(rec)
        if writer:
            writer.write(rec)
        worst_tangency = max(worst_tangency, boundary_tangency_residual(s))
        if cfg.snapshot_every and (k % cfg.snapshot_every == 0):
            path = os.path.join(cfg.out_dir, f"{cfg.scenario_id}_{k:06d}.mdf")
            write_snapshot(path, s.omega, s.t)

    try:
        emit(state)
        while state.t < cfg.t_final - 1e-12:
            state = step(state, step_cfg)
            k += 1
            emit(state)
        if cfg.snapshot_every:
            write_snapshot(os.path.join(cfg.out_dir, f"{cfg.scenario_id}_final.mdf"),
                           state.omega, state.t)
    finally:
        if writer:
            writer.close()
            gnuplot_stub(csv_path, os.path.join(cfg.out_dir, f"{cfg.scenario_id}.gp"))

    failures = []
    if worst_tangency > tangency_bound:
        failures.append(
            f"tangency residual {worst_tangency:.3e} exceeds {tangency_bound:.3e}")
    if cfg.nu > 0 and cfg.forcing == "potential":
        verdicts = monotonicity_report(records)
        for r, verdict in verdicts.items():
            if not verdict.passed:
                failures.append(
                    f"L^{r} monotonicity violated at step {verdict.first_violation} "
                    f"(ratio {verdict.worst_ratio:.12f})")
    for f in failures:
        say(f"invariant failure [{cfg.scenario_id}]: {f}")
    say(f"{cfg.scenario_id}: {k} steps to t = {state.t:.6g}, "
        f"{'PASS' if not failures else 'FAIL'}")
    return EXIT_OK if not failures else EXIT_INVARIANT


def _run_family(cfg, m, grid, omega0, say) -> int:
    from .grid import integrate

    step_cfg = StepConfig(dt=cfg.dt, cfl_limit=cfg.cfl_limit,
                          advection_scheme=cfg.advection,
                          diffusion_scheme=cfg.diffusion)
    scenario = Scenario(cfg.scenario_id, m, omega0, cfg.t_final, forcing=cfg.forcing)
    report = run_family(scenario, cfg.nu_list, grid, step_cfg)
    csv_path, txt_path = write_family_report(report, cfg.out_dir, cfg.scenario_id)
    say(f"family report: {csv_path}, {txt_path}")

    if report.failures:
        for nu, msg in report.failures.items():
            say(f"family member nu={nu} failed: {msg}")
        return EXIT_NUMERICAL

    failures = []
    for r, sups in report.lr_sup.items():
        bound = integrate(omega0, r) + 1e-6
        if any(s > bound for s in sups):
            failures.append(f"uniform L^{r} bound violated: sup {max(sups):.8f} > {bound:.8f}")
    if any(a <= b for a, b in zip(report.cauchy_l2, report.cauchy_l2[1:])):
        failures.append(f"Cauchy differences not decreasing: {report.cauchy_l2}")
    for f in failures:
        say(f"invariant failure [{cfg.scenario_id}]: {f}")
    say(f"{cfg.scenario_id}: family of {len(cfg.nu_list)}, "
        f"{'PASS' if not failures else 'FAIL'}")
    return EXIT_OK if not failures else EXIT_INVARIANT


# ---------------------------------------------------------------------------
# suites
# ---------------------------------------------------------------------------

def packaged_configs():
    """Paths of the checked-in scenario configs, sorted for determinism."""
    root = os.path.join(os.path.dirname(__file__), "configs")
    return sorted(
        os.path.join(root, name) for name in os.listdir(root) if name.endswith(".cfg")
    )


def run_suite(which: str, out_dir: str, quiet: bool = False) -> int:
    if which == "invariants":
        return _run_invariants_suite(quiet)
    if which != "acceptance":
        print(f"unknown suite {which!r}", file=sys.stderr)
        return EXIT_CONFIG
    worst = EXIT_OK
    for path in packaged_configs():
        with open(path) as fh:
            try:
                cfg = parse_config(fh.read())
            except ConfigError as exc:
                for e in exc.errors:
                    print(f"{path}: config error: {e}", file=sys.stderr)
                return EXIT_CONFIG
        cfg.out_dir = os.path.join(out_dir, cfg.scenario_id)
        code = run(cfg, quiet=quiet)
        status = {EXIT_OK: "PASS", EXIT_INVARIANT: "FAIL",
                  EXIT_NUMERICAL: "NUMERICAL-FAIL"}.get(code, "ERROR")
        print(f"[{status}] {os.path.basename(path)}")
        worst = max(worst, code)
    return worst


def _run_invariants_suite(quiet: bool) -> int:
    """Fast geometry and homogenization invariant checks (no time stepping)."""
    from .homogenize import analytic_rho, numerical_rho

    checks = []
    motions = {
        "identity": mo.identity_motion(1.0),
        "translation": mo.translation_motion(
            lambda t: np.array([t, 0.0]), lambda t: np.array([1.0, 0.0]), 1.0),
        "stretch": mo.stretch_motion(lambda t: 0.2 * t, lambda t: 0.2, 1.0),
        "rotating_ellipse": mo.rotating_ellipse_motion(
            np.sqrt(2.0), lambda t: t, lambda t: 1.0, 1.0),
    }
    rng = np.random.default_rng(7)
    pts = rng.uniform(-0.7, 0.7, size=(32 * 32, 2))
    times = np.linspace(0.0, 1.0, 16)
    for name, m in motions.items():
        worst_rt = worst_det = worst_circ = worst_inv = 0.0
        for t in times:
            y = mo.map_forward(m, pts, t)
            back = mo.map_backward(m, y, t)
            worst_rt = max(worst_rt, float(np.max(np.abs(back - pts))))
            worst_det = max(worst_det, abs(np.linalg.det(mo.jacobian(m, pts[0], t)) - 1.0))
            worst_circ = max(worst_circ, abs(mo.flux_circulation(m, t)))
            md = mo.metric_at(m, (0.0, 0.0), t)
            worst_inv = max(worst_inv, float(np.max(np.abs(md.q_up @ md.q_down - np.eye(2)))))
        checks.append((f"{name}: round-trip", worst_rt < 1e-12, worst_rt))
        checks.append((f"{name}: unit jacobian", worst_det < 1e-12, worst_det))
        checks.append((f"{name}: flux circulation", worst_circ < 1e-10, worst_circ))
        checks.append((f"{name}: metric inverse", worst_inv < 1e-12, worst_inv))
        grid = Grid(64, 128)
        ana = analytic_rho(m, 0.5, grid)
        num = numerical_rho(m, 0.5, grid)
        gap = max(float(np.max(np.abs(ana.rho.u1 - num.rho.u1))),
                  float(np.max(np.abs(ana.rho.u2 - num.rho.u2))))
        checks.append((f"{name}: homogenization paths agree", gap < 1e-6, gap))

    failed = [c for c in checks if not c[1]]
    if not quiet:
        for name, ok, value in checks:
            print(f"[{'PASS' if ok else 'FAIL'}] {name} ({value:.3e})")
    print(f"invariants: {len(checks) - len(failed)}/{len(checks)} passed")
    return EXIT_OK if not failed else EXIT_INVARIANT


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="mdflow",
        description="Moving-domain ideal-flow solver and estimate verification harness",
    )
    parser.add_argument("--config", help="run configuration file")
    parser.add_argument("--suite", choices=["acceptance", "invariants"],
                        help="run a built-in scenario suite")
    parser.add_argument("--out", help="output directory override")
    parser.add_argument("--quiet", action="store_true", help="suppress progress output")
    args = parser.parse_args(argv)

    if args.suite:
        return run_suite(args.suite, args.out or "out", quiet=args.quiet)
    if not args.config:
        parser.print_help()
        return EXIT_CONFIG
    try:
        with open(args.config) as fh:
            text = fh.read()
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = parse_config(text)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.out:
        cfg.out_dir = args.out
    return run(cfg, quiet=args.quiet)


if __name__ == "__main__":
    sys.exit(main())
