"""Discounted protection MDP: uniformized Bellman backups, value iteration,
truncated policy iteration (with the stability-constrained variant),
protection-advantage maps, threshold-structure audits, and tipping-point
sweeps.

Grid sweeps run on the active kernel engine; everything here stores scaled
values (scale * J with scale = gamma + lam + n*mu).
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .engine import kernels
from .model import (
    Grid,
    ProtectPolicy,
    QueueState,
    SystemParams,
    UniformizedParams,
    ValueTable,
    interior_mask,
    successor_tables,
    uniformize,
)
from .stability import protect_floor_map

MAX_IMPROVEMENT_ROUNDS = 100


class BoundaryStateError(ValueError):
    """Raised when a per-state quantity needs successors beyond the grid bound."""


@dataclass(frozen=True)
class SolverConfig:
    """Iteration controls shared by the MDP and game solvers.

    `update_scheme` is 'in-place' (Gauss-Seidel, the pseudocode default for
    policy iteration) or 'synchronous' (Jacobi, used for contraction-rate
    checks); None selects the per-solver default.
    """

    epsilon: float = 1e-6
    max_iterations: int = 100_000
    update_scheme: str | None = None
    stability_constrained: bool = False

    def __post_init__(self) -> None:
        if not self.epsilon > 0.0:
            raise ValueError("epsilon must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.update_scheme not in (None, "in-place", "synchronous"):
            raise ValueError("update_scheme must be 'in-place' or 'synchronous'")


@dataclass(frozen=True)
class SolveReport:
    value: ValueTable
    policy: ProtectPolicy
    iterations: int
    residual: float
    converged: bool
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))


def _rel_args(params: SystemParams, grid: Grid, uni: UniformizedParams):
    tab = successor_tables(grid)
    alam = params.fault_prob * uni.lambda_tilde
    return tab, (tab.down, tab.up, tab.upmin, tab.norm1, params.p,
                 uni.lambda_tilde, uni.mu_tilde, alam, params.protect_cost)


def _protect_gain(values: np.ndarray, params: SystemParams, grid: Grid,
                  uni: UniformizedParams) -> np.ndarray:
    """a * lam_tilde * (sum_i p_i J(x+e_i) - J(x+e_min)) per state, clamped."""
    tab = successor_tables(grid)
    acc = params.p[0] * values[tab.up[0]]
    for i in range(1, grid.n):
        acc = acc + params.p[i] * values[tab.up[i]]
    return params.fault_prob * uni.lambda_tilde * (acc - values[tab.upmin])


def bellman_backup(values: ValueTable, x: QueueState, params: SystemParams,
                   uni: UniformizedParams | None = None) -> tuple[float, int]:
    """One uniformized backup at a single state.

    Returns the backed-up scaled value and the minimizing protect action
    (ties resolve to 0).  Successors are clamped at the grid bound.
    """
    grid = values.grid
    if not grid.contains(x.lengths):
        raise IndexError(f"state {x.lengths} outside grid")
    if uni is None:
        uni = uniformize(params)
    s = grid.index_of(x.lengths)
    tab = successor_tables(grid)
    J = values.values
    acc_down = sum(float(J[tab.down[i, s]]) for i in range(grid.n))
    acc_up = sum(params.routing_probs[i] * float(J[tab.up[i, s]]) for i in range(grid.n))
    jmin = float(J[tab.upmin[s]])
    gain = params.fault_prob * uni.lambda_tilde * (acc_up - jmin)
    base = x.norm1 + uni.mu_tilde * acc_down + uni.lambda_tilde * jmin
    if gain > params.protect_cost:
        return base + params.protect_cost, 1
    return base + gain, 0


def greedy_policy(values: ValueTable, params: SystemParams,
                  uni: UniformizedParams | None = None) -> ProtectPolicy:
    """Deterministic policy that is greedy for a converged value table."""
    if uni is None:
        uni = uniformize(params)
    gain = _protect_gain(values.values, params, values.grid, uni)
    return ProtectPolicy(values.grid, (gain > params.protect_cost).astype(np.float64))


def _iterate(values: np.ndarray, sweep_inplace, sweep_sync, args, scheme: str,
             epsilon: float, max_iterations: int):
    residuals = []
    converged = False
    if scheme == "in-place":
        for _ in range(max_iterations):
            resid = sweep_inplace(values, *args)
            residuals.append(resid)
            if resid < epsilon:
                converged = True
                break
        out = values
    else:
        other = np.empty_like(values)
        cur = values
        for _ in range(max_iterations):
            resid = sweep_sync(cur, other, *args)
            residuals.append(resid)
            cur, other = other, cur
            if resid < epsilon:
                converged = True
                break
        out = cur
    return out, np.asarray(residuals), converged


def value_iteration(params: SystemParams, grid: Grid,
                    config: SolverConfig | None = None) -> SolveReport:
    """Fixed-point iteration of the uniformized protection backup.

    Synchronous sweeps by default; non-convergence within max_iterations is
    reported through `converged`, never silently.
    """
    config = config or SolverConfig()
    scheme = config.update_scheme or "synchronous"
    uni = uniformize(params)
    _, args = _rel_args(params, grid, uni)
    J = np.zeros(grid.size)
    J, residuals, converged = _iterate(
        J, kernels.rel_sweep_inplace, kernels.rel_sweep_sync, args, scheme,
        config.epsilon, config.max_iterations)
    value = ValueTable(grid, J)
    return SolveReport(
        value=value,
        policy=greedy_policy(value, params, uni),
        iterations=len(residuals),
        residual=float(residuals[-1]),
        converged=converged,
        residuals=residuals,
    )


def truncated_policy_iteration(params: SystemParams, grid: Grid,
                               config: SolverConfig | None = None) -> SolveReport:
    """Policy iteration on the truncated grid.

    Follows the pseudocode literally: the evaluation loop re-minimizes over
    the protect action (optimistic policy iteration), improvement applies
    the threshold test "gain <= protect_cost => do not protect".  With
    `stability_constrained`, improvement writes the protection floor instead
    of 0 at non-diagonal states, producing a randomized policy; the value
    table still reports the unconstrained fixed point, as in the pseudocode.
    """
    config = config or SolverConfig()
    scheme = config.update_scheme or "in-place"
    uni = uniformize(params)
    _, args = _rel_args(params, grid, uni)
    off_value = (protect_floor_map(params, grid)
                 if config.stability_constrained else np.zeros(grid.size))

    J = np.zeros(grid.size)
    b = np.zeros(grid.size)
    all_resid = []
    sweeps = 0
    converged = False
    residual = np.inf
    for _ in range(MAX_IMPROVEMENT_ROUNDS):
        budget = config.max_iterations - sweeps
        if budget <= 0:
            break
        J, residuals, eval_ok = _iterate(
            J, kernels.rel_sweep_inplace, kernels.rel_sweep_sync, args, scheme,
            config.epsilon, budget)
        sweeps += len(residuals)
        all_resid.append(residuals)
        residual = float(residuals[-1])
        if not eval_ok:
            break
        gain = _protect_gain(J, params, grid, uni)
        new_b = np.where(gain > params.protect_cost, 1.0, off_value)
        if np.array_equal(new_b, b):
            converged = True
            break
        b = new_b
    return SolveReport(
        value=ValueTable(grid, J),
        policy=ProtectPolicy(grid, b),
        iterations=sweeps,
        residual=residual,
        converged=converged,
        residuals=np.concatenate(all_resid) if all_resid else np.empty(0),
    )


def delta(values: ValueTable, x: QueueState, params: SystemParams,
          uni: UniformizedParams | None = None) -> float:
    """Protection advantage sum_i p_i J(x+e_i) - J(x+e_m), m the lowest-index
    argmin.  Only defined where no successor clamps."""
    grid = values.grid
    if x.x_max >= grid.bound:
        raise BoundaryStateError(
            f"state {x.lengths} has clamped successors; advantage is biased there")
    s = grid.index_of(x.lengths)
    tab = successor_tables(grid)
    J = values.values
    acc = sum(params.routing_probs[i] * float(J[tab.up[i, s]]) for i in range(grid.n))
    return acc - float(J[tab.upmin[s]])


def delta_map(values: ValueTable, params: SystemParams) -> tuple[np.ndarray, np.ndarray]:
    """Protection advantage per state plus a validity mask (no clamped
    successors)."""
    grid = values.grid
    tab = successor_tables(grid)
    J = values.values
    acc = params.p[0] * J[tab.up[0]]
    for i in range(1, grid.n):
        acc = acc + params.p[i] * J[tab.up[i]]
    d = acc - J[tab.upmin]
    valid = tab.xmax < grid.bound
    return d, valid


@dataclass(frozen=True)
class MonotonicityViolation:
    state: QueueState
    direction: str  # 'up-i' (1-based server) or 'down-min'
    deficit: float


def monotonicity_audit(values: ValueTable, params: SystemParams,
                       tol: float = 1e-7) -> list[MonotonicityViolation]:
    """Check the threshold-structure inequalities of the protection advantage.

    For every audited state x with m the lowest-index argmin:
    Delta(x+e_i) >= Delta(x) - tol for i != m, and
    Delta(x - e_m) >= Delta(x) - tol when x_m > 0.
    Advantage values from inside the boundary margin are biased by clamped
    successors, so an inequality is audited only when both of its operands
    lie in the trusted interior.
    """
    grid = values.grid
    tab = successor_tables(grid)
    d, _ = delta_map(values, params)
    audit = interior_mask(grid)
    states = tab.states
    violations: list[MonotonicityViolation] = []
    for i in range(grid.n):
        mask = audit & audit[tab.up[i]] & (tab.argmin != i)
        bad = mask & (d[tab.up[i]] < d - tol)
        for s in np.flatnonzero(bad):
            violations.append(MonotonicityViolation(
                QueueState(tuple(states[s])), f"up-{i + 1}",
                float(d[s] - d[tab.up[i, s]])))
    mask = audit & (tab.xmin > 0)
    bad = mask & (d[tab.downmin] < d - tol)
    for s in np.flatnonzero(bad):
        violations.append(MonotonicityViolation(
            QueueState(tuple(states[s])), "down-min",
            float(d[s] - d[tab.downmin[s]])))
    return violations


@dataclass(frozen=True)
class TippingSweepResult:
    """Grid of 'does the solved policy protect anywhere in the interior'."""

    a_values: tuple[float, ...]
    cb_values: tuple[float, ...]
    protects: np.ndarray  # shape (len(a_values), len(cb_values)), bool
    converged: np.ndarray  # same shape, bool
    monotonicity_violations: tuple[tuple[float, float, str], ...]


def tipping_point_sweep(params: SystemParams, grid: Grid, config: SolverConfig,
                        a_values, cb_values) -> TippingSweepResult:
    """Solve across a (fault probability, protect cost) lattice and report
    where protection first becomes worthwhile.

    The indicator should be non-decreasing in the fault probability and
    non-increasing in the cost; violations of that pattern are reported,
    not raised.
    """
    a_values = tuple(float(v) for v in a_values)
    cb_values = tuple(float(v) for v in cb_values)
    protects = np.zeros((len(a_values), len(cb_values)), dtype=bool)
    converged = np.zeros_like(protects)
    inner = interior_mask(grid)
    for ia, a in enumerate(a_values):
        for ic, cb in enumerate(cb_values):
            cell = dataclasses.replace(params, fault_prob=a, protect_cost=cb)
            report = value_iteration(cell, grid, config)
            converged[ia, ic] = report.converged
            protects[ia, ic] = bool(np.any(report.policy.probs[inner] == 1.0))
    violations = []
    for ic, cb in enumerate(cb_values):
        col = protects[:, ic]
        for ia in range(1, len(a_values)):
            if col[ia - 1] and not col[ia]:
                violations.append((a_values[ia], cb, "not non-decreasing in fault probability"))
    for ia, a in enumerate(a_values):
        row = protects[ia]
        for ic in range(1, len(cb_values)):
            if not row[ic - 1] and row[ic]:
                violations.append((a, cb_values[ic], "not non-increasing in protect cost"))
    return TippingSweepResult(a_values, cb_values, protects, converged,
                              tuple(violations))
