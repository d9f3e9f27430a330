"""Linearly solvable stochastic differential games.

Build a ``GameSpec`` (see ``moving_wells_spec`` for the two-player example),
estimate desirabilities with ``estimate_Z_at``, act with the path-integral
policies from ``pi_control``, recover the equilibrium path measure with
``tilt_weights`` and cross-check everything against ``oracles``.
"""

from .desirability import DesirabilityEstimate, estimate_Z, estimate_Z_at, estimate_Z_field, path_cost
from .errors import (
    BandwidthNonPositive,
    ConfigError,
    DegenerateWeights,
    DomainTooNarrow,
    GameError,
    GridMismatch,
    HorizonExhausted,
    InstabilityDetected,
    MissingControls,
    NonFiniteControl,
    NonFiniteState,
    NonPositiveDesirability,
    NonPositiveDiagonal,
    OffGridTime,
    Overflow,
    PlayerCountMismatch,
    SingularMatrix,
)
from .experiments import ExperimentConfig, default_config, load_config, run_experiment
from .game_model import (
    CenterPath,
    CostModel,
    DynamicsModel,
    GameSpec,
    InteractionMatrix,
    RunningCost,
    TerminalCost,
    asymmetric_alpha,
    build_interaction_matrix,
    cole_hopf_forward,
    cole_hopf_inverse,
    gaussian_benchmark_spec,
    moving_wells_spec,
    spec_from_json,
    symmetric_alpha,
)
from .measure_recovery import (
    WeightedEnsemble,
    compare_perspectives,
    cost_equivalence_check,
    expectation_distance,
    log_rn_self,
    mean_curve,
    tilt_weights,
    weighted_density,
)
from .oracles import (
    Grid1D,
    RiccatiSolution,
    ZField,
    default_grid,
    hjb_residual,
    riccati_desirability_reference,
    riccati_lq_reference,
    solve_linear_pde_fd,
)
from .pi_control import (
    SharedNoiseController,
    control_estimate,
    equilibrium_policies,
    make_pi_policy,
    nash_closed_loop,
)
from .sde_engine import (
    FeedbackPolicy,
    TrajectoryBatch,
    constant_policy,
    linear_policy,
    rollout_controlled,
    rollout_reference,
)

__version__ = "0.1.0"
