"""Structure-preserving discontinuous Galerkin time stepping for gradient systems."""

from .core import (
    GradientSystemProblem,
    OpStructure,
    avf_dgrad,
    dgrad_identity_residual,
    gonzalez_dgrad,
    itoh_abe_dgrad,
    weak_dgrad,
)
from .problems import (
    CnoidalWave,
    KdVProblem,
    QuarticProblem,
    ScalarODEProblem,
    build_kdv_problem,
    cnoidal_exact,
    interpolate_initial,
    scalar_dgrad_closed,
    scalar_ode_exact,
)
from .stepper import (
    NewtonConvergenceError,
    NewtonOptions,
    SingularJacobianError,
    SolverError,
    Stepper,
    TimeMesh,
    Trajectory,
    energy_identity_residual,
    evaluate,
    integrate,
    step_interval,
)

__version__ = "0.1.0"
