"""Factorization-free conic optimization with hypersphere preconditioning.

The package solves strongly convex quadratic cone programs with a
first-order primal-dual method whose behaviour is governed by the
conditioning of the KKT system.  The preconditioning pipeline reshapes the
objective's sublevel sets into spheres, normalizes constraint rows cone
block by cone block, and rescales the objective by the analytically optimal
factor, all without factorizing anything on the solve path.

Typical use::

    from hpipg import precondition, solve, recover_solution

    pre, record = precondition(qcp)
    report = solve(pre)
    xi, mu = recover_solution(record, report.z_final, report.eta_final)
"""

from .cones import (
    CONE_ORTHANT,
    CONE_SOC,
    CONE_ZERO,
    SET_BALL,
    SET_BOX,
    SET_FREE,
    SET_HALFSPACE,
    SET_SOC,
    ConeBlock,
    SeparableSetBlock,
    ball_set,
    box_set,
    cone_distance,
    free_set,
    halfspace_set,
    project_cone,
    project_polar,
    project_set,
    soc_set,
)
from .errors import (
    DimensionMismatch,
    HpipgError,
    IncompatibleScaling,
    InvalidConfig,
    InvalidInput,
    NotPositiveDefinite,
    OracleFailed,
)
from .linalg import (
    CholeskyFactor,
    PowerIterationConfig,
    PowerIterationResult,
    SpectralEstimates,
    StructuredSpdMatrix,
    cholesky,
    power_iteration,
    shifted_power_iteration,
)
from .pipg import (
    PipgConfig,
    PipgSolver,
    PipgState,
    SolveReport,
    iterate,
    optimal_omega,
    solve,
    solve_qcp,
    step_sizes,
)
from .precond import (
    HyperspherePreconditioner,
    PreconditionedQcp,
    RuizConfig,
    RuizEquilibrator,
    RuizScaling,
    TransformRecord,
    precondition,
    recover_solution,
    ruiz_equilibrate,
)
from .problem import (
    KktDiagnostics,
    Qcp,
    dump_problem,
    kappa_at_optimum,
    kkt_condition_number,
    kkt_diagnostics,
    kkt_residual,
    kkt_spectrum,
    load_problem,
    optimal_lambda,
    validate,
)

__version__ = "0.1.0"

__all__ = [
    "CONE_ORTHANT",
    "CONE_SOC",
    "CONE_ZERO",
    "SET_BALL",
    "SET_BOX",
    "SET_FREE",
    "SET_HALFSPACE",
    "SET_SOC",
    "CholeskyFactor",
    "ConeBlock",
    "DimensionMismatch",
    "HpipgError",
    "HyperspherePreconditioner",
    "IncompatibleScaling",
    "InvalidConfig",
    "InvalidInput",
    "KktDiagnostics",
    "NotPositiveDefinite",
    "OracleFailed",
    "PipgConfig",
    "PipgSolver",
    "PipgState",
    "PowerIterationConfig",
    "PowerIterationResult",
    "PreconditionedQcp",
    "Qcp",
    "RuizConfig",
    "RuizEquilibrator",
    "RuizScaling",
    "SeparableSetBlock",
    "SolveReport",
    "SpectralEstimates",
    "StructuredSpdMatrix",
    "TransformRecord",
    "ball_set",
    "box_set",
    "cholesky",
    "cone_distance",
    "dump_problem",
    "free_set",
    "halfspace_set",
    "iterate",
    "kappa_at_optimum",
    "kkt_condition_number",
    "kkt_diagnostics",
    "kkt_residual",
    "kkt_spectrum",
    "load_problem",
    "optimal_lambda",
    "optimal_omega",
    "power_iteration",
    "precondition",
    "project_cone",
    "project_polar",
    "project_set",
    "recover_solution",
    "ruiz_equilibrate",
    "shifted_power_iteration",
    "soc_set",
    "solve",
    "solve_qcp",
    "step_sizes",
    "validate",
]
