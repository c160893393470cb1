"""Continuous-time Monte Carlo engine for the failure-prone routing dynamics
under arbitrary state-dependent protect/attack strategies.

Discounted cost accrues in closed form between events (no quadrature error).
The canonical accounting charges the protect/attack cost as a rate while the
decision drawn on state entry is active; a per-arrival lump-sum variant is
available behind `cost_mode='lump'`.  Replications use deterministically
derived PCG64 streams, so runs are bit-reproducible per (seed, replication)
on either kernel engine.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy import stats

from .engine import kernels
from .model import (
    AttackStrategy,
    ProtectPolicy,
    QueueState,
    SystemParams,
)
from .stability import certify_policy

ARRIVAL_MIN = 0
ARRIVAL_FAULTY = 1
ARRIVAL_ATTACKED = 2
SERVICE = 3

KIND_NAMES = {
    ARRIVAL_MIN: "arrival-routed-min",
    ARRIVAL_FAULTY: "arrival-faulty",
    ARRIVAL_ATTACKED: "arrival-attacked-max",
    SERVICE: "service",
}

_TIE_MODES = {"lowest-index": 0, "uniform": 1, "weighted": 2}


class PolicyDomainError(RuntimeError):
    """A strategy was undefined at a reached state and extension is disabled."""


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls.

    The discount defaults to the model's gamma.  `tie_break` picks the
    destination among equally short (or long) queues; `tie_weights` is
    required for the 'weighted' mode.  `confine_to_grid` drops arrivals at
    the truncation bound, matching the clamped-grid chain solved by the
    dynamic programs.
    """

    horizon: float = 50_000.0
    replications: int = 20
    seed: int = 0
    tie_break: str = "uniform"
    tie_weights: tuple[float, ...] | None = None
    discount: float | None = None
    cost_mode: str = "rate"
    burn_in_fraction: float = 0.1
    confine_to_grid: bool = False
    extension: str = "clamp"

    def __post_init__(self) -> None:
        if not self.horizon > 0.0:
            raise ValueError("horizon must be positive")
        if self.replications < 1:
            raise ValueError("replications must be at least 1")
        if self.tie_break not in _TIE_MODES:
            raise ValueError(f"tie_break must be one of {sorted(_TIE_MODES)}")
        if self.tie_break == "weighted":
            if not self.tie_weights or any(w <= 0.0 for w in self.tie_weights):
                raise ValueError("weighted tie-break needs positive tie_weights")
        if self.discount is not None and not self.discount > 0.0:
            raise ValueError("discount must be positive")
        if self.cost_mode not in ("rate", "lump"):
            raise ValueError("cost_mode must be 'rate' or 'lump'")
        if not 0.0 <= self.burn_in_fraction < 1.0:
            raise ValueError("burn_in_fraction must lie in [0, 1)")
        if self.extension not in ("clamp", "error"):
            raise ValueError("extension must be 'clamp' or 'error'")


@dataclass(frozen=True)
class EventCounts:
    routed_min: int
    attacked: int
    faulty: tuple[int, ...]  # per queue, 1-based order
    services: tuple[int, ...]


@dataclass(frozen=True)
class Trajectory:
    """Event log: times are strictly increasing, `queues` is the 1-based
    destination/server of each event, `states` the state just after it."""

    initial_state: QueueState
    times: np.ndarray
    kinds: np.ndarray
    queues: np.ndarray
    states: np.ndarray
    final_state: QueueState

    def kind_names(self) -> list[str]:
        return [KIND_NAMES[int(k)] for k in self.kinds]


@dataclass(frozen=True)
class SimRun:
    trajectory: Trajectory | None
    discounted_cost: float
    discounted_cost_lump: float
    mean_queue: float
    counts: EventCounts


@dataclass(frozen=True)
class CostEstimate:
    """Across-replication mean with a 95% confidence half-width."""

    mean: float
    half_width: float
    per_replication: np.ndarray


def _stream(seed: int, replication: int) -> np.random.PCG64:
    return np.random.PCG64(np.random.SeedSequence([int(seed), int(replication)]))


def _run_kernel(params: SystemParams, policy: ProtectPolicy,
                attack: AttackStrategy | None, config: SimConfig,
                replication: int, x0, record: bool):
    grid = policy.grid
    if attack is not None and attack.grid != grid:
        raise ValueError("attack strategy is defined on a different grid")
    n = params.n
    if x0 is None:
        x0 = (0,) * n
    x0 = tuple(int(v) for v in x0)
    if len(x0) != n or any(v < 0 for v in x0):
        raise ValueError("x0 must be a non-negative state of length n")
    if config.confine_to_grid and any(v > grid.bound for v in x0):
        raise ValueError("x0 outside the grid with confine_to_grid enabled")
    gamma = config.discount if config.discount is not None else params.gamma
    tie_weights = config.tie_weights or (1.0,) * n
    aprobs = attack.probs if attack is not None else np.zeros(grid.size)
    out = kernels.simulate(
        _stream(config.seed, replication),
        n, params.lam, params.mu, gamma,
        1 if attack is not None else 0,
        params.fault_prob, params.protect_cost, params.attack_cost,
        params.p,
        np.ascontiguousarray(policy.probs),
        np.ascontiguousarray(aprobs),
        grid.bound,
        np.asarray(grid.strides, dtype=np.int64),
        _TIE_MODES[config.tie_break],
        np.asarray(tie_weights, dtype=np.float64),
        np.asarray(x0, dtype=np.int64),
        config.horizon, config.burn_in_fraction,
        int(config.confine_to_grid), int(config.extension == "clamp"),
        int(record),
    )
    if out[5]:
        raise PolicyDomainError(
            "strategy undefined at a reached state (extension='error')")
    return out, x0, gamma


def run_trajectory(params: SystemParams, policy: ProtectPolicy,
                   attack: AttackStrategy | None = None,
                   config: SimConfig | None = None, replication: int = 0,
                   x0=None, record: bool = True) -> SimRun:
    """Simulate one replication; returns the event log and both cost totals."""
    config = config or SimConfig()
    out, x0, _ = _run_kernel(params, policy, attack, config, replication, x0, record)
    cost_rate, cost_lump, qint, counts, xfinal, _err, times, kinds, queues, states = out
    n = params.n
    traj = None
    if record:
        traj = Trajectory(
            initial_state=QueueState(x0),
            times=times,
            kinds=kinds,
            queues=(queues + 1).astype(np.int16),
            states=states,
            final_state=QueueState(tuple(int(v) for v in xfinal)),
        )
    horizon = config.horizon
    burn = config.burn_in_fraction * horizon
    return SimRun(
        trajectory=traj,
        discounted_cost=float(cost_rate),
        discounted_cost_lump=float(cost_lump),
        mean_queue=float(qint) / (horizon - burn),
        counts=EventCounts(
            routed_min=int(counts[0]),
            attacked=int(counts[1]),
            faulty=tuple(int(v) for v in counts[2:2 + n]),
            services=tuple(int(v) for v in counts[2 + n:2 + 2 * n]),
        ),
    )


def _half_width(values: np.ndarray) -> float:
    r = len(values)
    if r < 2:
        return math.inf
    sd = float(np.std(values, ddof=1))
    if sd == 0.0:
        return 0.0
    return float(stats.t.ppf(0.975, r - 1)) * sd / math.sqrt(r)


def _estimate(params, policy, attack, config, x0, metric) -> CostEstimate:
    vals = np.empty(config.replications)
    for rep in range(config.replications):
        run = run_trajectory(params, policy, attack, config, rep, x0, record=False)
        vals[rep] = metric(run)
    return CostEstimate(float(np.mean(vals)), _half_width(vals), vals)


def estimate_discounted_cost(params: SystemParams, policy: ProtectPolicy,
                             attack: AttackStrategy | None = None,
                             config: SimConfig | None = None,
                             x0=None) -> CostEstimate:
    """Across-replication estimate of the cumulative discounted cost."""
    config = config or SimConfig()
    if config.cost_mode == "lump":
        return _estimate(params, policy, attack, config, x0,
                         lambda run: run.discounted_cost_lump)
    return _estimate(params, policy, attack, config, x0,
                     lambda run: run.discounted_cost)


def estimate_mean_queue(params: SystemParams, policy: ProtectPolicy,
                        attack: AttackStrategy | None = None,
                        config: SimConfig | None = None,
                        x0=None) -> CostEstimate:
    """Time-average total queue length after the burn-in fraction.

    Warns when the supplied strategies carry no grid drift certificate:
    without one the long-run average may not exist.
    """
    config = config or SimConfig()
    try:
        certified = certify_policy(params, policy.grid, policy, attack).stable_certificate
    except ValueError:
        certified = False  # audit set empty on a tiny grid
    if not certified:
        warnings.warn(
            "no drift certificate for this strategy pair; the long-run "
            "mean queue may be unbounded", stacklevel=2)
    return _estimate(params, policy, attack, config, x0,
                     lambda run: run.mean_queue)


def estimate_metrics(params: SystemParams, policy: ProtectPolicy,
                     attack: AttackStrategy | None = None,
                     config: SimConfig | None = None,
                     x0=None) -> tuple[CostEstimate, CostEstimate]:
    """Discounted-cost and mean-queue estimates from a single batch of runs."""
    config = config or SimConfig()
    costs = np.empty(config.replications)
    queues = np.empty(config.replications)
    for rep in range(config.replications):
        run = run_trajectory(params, policy, attack, config, rep, x0, record=False)
        costs[rep] = (run.discounted_cost_lump if config.cost_mode == "lump"
                      else run.discounted_cost)
        queues[rep] = run.mean_queue
    return (
        CostEstimate(float(np.mean(costs)), _half_width(costs), costs),
        CostEstimate(float(np.mean(queues)), _half_width(queues), queues),
    )


@dataclass(frozen=True)
class PolicyComparison:
    """Raw and min-max normalized discounted costs under common random
    numbers.  When all compared costs coincide the normalized scores are 0
    and `degenerate` is set."""

    names: tuple[str, ...]
    raw: dict[str, CostEstimate]
    normalized: dict[str, float]
    degenerate: bool


def compare_policies(params: SystemParams, policies: dict[str, ProtectPolicy],
                     config: SimConfig | None = None,
                     attack: AttackStrategy | None = None,
                     x0=None) -> PolicyComparison:
    """Estimate each policy's discounted cost with common random numbers and
    min-max normalize across the compared set."""
    if len(policies) < 2:
        raise ValueError("need at least two policies to compare")
    config = config or SimConfig()
    raw = {name: estimate_discounted_cost(params, pol, attack, config, x0)
           for name, pol in policies.items()}
    means = np.array([raw[name].mean for name in policies])
    lo, hi = float(means.min()), float(means.max())
    degenerate = not hi > lo
    if degenerate:
        normalized = {name: 0.0 for name in policies}
    else:
        normalized = {name: (raw[name].mean - lo) / (hi - lo) for name in policies}
    return PolicyComparison(tuple(policies), raw, normalized, degenerate)
