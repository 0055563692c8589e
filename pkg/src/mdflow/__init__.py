"""2D incompressible ideal flow in a smoothly moving material domain.

The solver pulls the problem back to the fixed unit disk through a
unit-Jacobian map, homogenizes the boundary flux with a harmonic gradient
field, evolves the vorticity with a viscous regularization, and verifies
the a priori estimates (L^r monotonicity, tangency, uniform
vanishing-viscosity bounds) that make the construction work.
"""

from .diagnostics import (
    DiagnosticsRecord,
    TestField,
    make_test_field,
    monotonicity_report,
    record,
    weak_residual,
)
from .elliptic import (
    EllipticError,
    elliptic_apply,
    solve_dirichlet,
    solve_helmholtz,
    solve_neumann,
)
from .grid import (
    Grid,
    ScalarField,
    VectorField,
    curl,
    divergence,
    gradient,
    integrate,
    read_snapshot,
    write_snapshot,
)
from .harness import (
    FamilyReport,
    LimitCandidate,
    Scenario,
    richardson_limit,
    run_family,
)
from .homogenize import HomogenizationResult, analytic_rho, numerical_rho
from .motion import (
    MetricData,
    MotionSpec,
    boundary_flux,
    boundary_normal,
    custom_motion,
    identity_motion,
    jacobian,
    map_backward,
    map_forward,
    material_velocity,
    metric_at,
    rotating_ellipse_motion,
    signed_distance,
    stretch_motion,
    translation_motion,
)
from .solver import (
    CFLError,
    SolverState,
    StepConfig,
    advection_field,
    biot_savart,
    create_state,
    initial_condition,
    mollify_initial,
    step,
    vorticity_forcing,
)

__version__ = "0.1.0"
