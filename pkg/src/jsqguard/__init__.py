"""jsqguard: solvers and Monte Carlo simulation for protecting
join-shortest-queue routing against random faults and strategic attacks.

Computes optimal protection policies for the discounted MDP, attacker-
defender Markov perfect equilibria for the zero-sum stochastic game,
grid-restricted Foster-Lyapunov stability certificates with mean-queue
bounds, and validates all of them by continuous-time simulation.
"""

from .engine import active_engine
from .model import (
    AttackStrategy,
    Grid,
    ProtectPolicy,
    QueueState,
    SystemParams,
    UniformizedParams,
    ValueTable,
    argmax_server,
    argmin_server,
    contraction_factor,
    enumerate_states,
    interior_mask,
    successor_down,
    successor_up,
    uniformize,
)
from .reliability import (
    BoundaryStateError,
    MonotonicityViolation,
    SolveReport,
    SolverConfig,
    TippingSweepResult,
    bellman_backup,
    delta,
    delta_map,
    greedy_policy,
    monotonicity_audit,
    tipping_point_sweep,
    truncated_policy_iteration,
    value_iteration,
)
from .security import (
    EquilibriumPoint,
    EquilibriumViolation,
    GameSolveReport,
    MatrixGame2x2,
    RegimeSweepResult,
    RiskLabel,
    build_matrix_game,
    delta_sec,
    delta_sec_map,
    equilibrium_audit,
    game_value_gain,
    regime_sweep,
    shapley_iteration,
    solve_2x2,
)
from .sim import (
    CostEstimate,
    PolicyComparison,
    PolicyDomainError,
    SimConfig,
    SimRun,
    Trajectory,
    compare_policies,
    estimate_discounted_cost,
    estimate_mean_queue,
    estimate_metrics,
    run_trajectory,
)
from .stability import (
    DiagonalStateError,
    DriftReport,
    Reason,
    StabilityVerdict,
    attack_ceiling,
    attack_ceiling_map,
    certify_policy,
    drift_coefficients,
    protect_floor,
    protect_floor_map,
    reliability_drift,
    security_drift,
    unprotected_stability,
    verdict_from_report,
)

__version__ = "0.1.0"
