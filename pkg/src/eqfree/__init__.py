"""Equation-free analysis of the optimal-velocity ring-road traffic model.

Microscopic simulation bursts stand in for an unavailable macroscopic
equation: the standard deviation of the headways is lifted to car
states, healed toward the slow manifold, and measured again.  On top of
the resulting implicit coarse time stepper the package provides
equilibrium solving, stability multipliers, projective (backward)
integration, pseudo-arclength continuation in one and two parameters,
the analytic stability thresholds of the uniform flow, and a synthetic
slow-fast benchmark for the stepper's convergence in the healing time.
"""

__version__ = "0.1.0"

from .dp45 import IntegrationError, IntegratorSettings
from .micro_model import (
    MicroState,
    ModelParams,
    headways,
    integrate,
    integrate_path,
    ov_velocity,
    perturbed_state,
    rhs,
    uniform_flow_state,
)
from .coarse_map import (
    BurstValues,
    CoarseSettings,
    LiftContext,
    coarse_trajectory,
    evaluate_burst,
    healed_sigma,
    lift,
    macro_rhs,
    restrict,
)
from .solvers import (
    NewtonError,
    NewtonReport,
    SingularJacobianError,
    StencilDerivatives,
    TransversalityError,
    coarse_equilibrium,
    fd_first_order,
    fd_second_order,
    forward_backward_error,
    implicit_step,
    match_restriction,
    multiplier,
    newton_solve,
    projective_euler_step,
)
from .continuation import (
    Branch,
    BranchPoint,
    ContinuationError,
    CorrectorError,
    FoldEstimate,
    FoldNotFoundError,
    continue_branch,
    continue_fold,
    correct,
    detect_fold,
    equilibrium_seed,
    predict,
    refine_fold,
    secant_direction,
)
from .analysis import (
    BranchDistanceSpec,
    BranchNotGraphError,
    branch_distance,
    direct_downsweep,
    hopf_omega,
    hopf_residual,
    hopf_v0,
    lifting_sweep,
    tskip_scan,
)
from .convergence_lab import (
    ScanResult,
    ToySystem,
    convergence_scan,
    toy_implicit_step,
    toy_lift,
    toy_reference_flow,
    toy_restrict,
    toy_rhs,
)
