"""Splitting scheme for obstacle problems with convex coercive Hamiltonians.

The library solves semilinear parabolic variational inequalities by
alternating a dual-cost control step with a coefficient-frozen diffusion
expectation, capped nodewise by the obstacle, and ships the independent
oracles and the convergence harness used to verify the scheme's structural
properties and error rates at desk scale.
"""

from .backward import OperatorConfig, QuadratureRule, apply, apply_slice, frozen_expectation, gauss_hermite
from .errors import (
    ConfigError,
    FixedPointDiverged,
    NonConvergence,
    NonFinite,
    OracleUnavailable,
    OutOfRange,
    PolicyIterationDiverged,
    SplitviError,
    UnsupportedProblem,
    WindowTooSmall,
)
from .grids import GridFunction, SpatialGrid, sample
from .hamiltonians import (
    DualEvaluation,
    PowerIso,
    ProblemSpec,
    QuadraticIso,
    TabulatedConvex,
    effective_control_bound,
    eval_hamiltonian,
    legendre,
    probe_coercive,
)
from .reference import (
    ControlSet,
    FDSolverConfig,
    cole_hopf_reference,
    fd_hjb_finite_controls,
    fd_vi_solve,
    mc_expectation,
)
from .scheme import SchemeSolution, residual, solve, step
from .switching import KSweepReport, SwitchingConfig, SwitchingSolution, k_sweep, solve_switching, switching_residual

__version__ = "0.1.0"
