"""Optimal control of multiscale diffusions: grid solvers, homogenization,
Monte-Carlo estimators and the linear-quadratic reduction."""

__version__ = "0.1.0"

from .fk_pde import (
    BvpSolution,
    EllipticityError,
    Grid1D,
    IterationLimitError,
    MeshPecletWarning,
    ScalarModel1D,
    SolverError,
    as_feedback,
    evaluate_policy,
    evaluate_value,
    policy_cost,
    solve_hjb_policy_iteration,
    solve_linear_bvp,
)
from .homogenize import (
    HomogenizedCoeffs,
    PeriodicPotential,
    cell_residual,
    cell_solution,
    corrected_control,
    effective_diffusivity,
    overdamped_limit,
)
from .mc_estimators import (
    GapStudy,
    McEstimate,
    estimate_cost,
    estimate_exit_time,
    estimate_kl,
    estimate_psi,
    quadratic_gap_study,
    value_from_psi,
)
from .sde_engine import (
    DivergenceError,
    EnsembleResult,
    FeedbackPolicy,
    ModelSpec,
    TrajectoryResult,
    default_dt,
    offset_policy,
    run_ensemble,
    sample_ensemble,
    simulate,
)
