"""Foster-Lyapunov drift analysis for the quadratic witness W(x) = 0.5*sum(x_i^2):
exact generator drifts under arbitrary strategies, stability verdicts,
per-state protection floors and attack ceilings, and grid-restricted mean
queue bounds.

The certificate minimizes the drift coefficient over the truncated grid
minus its boundary band.  The coefficient depends on x only through the
direction x/||x||_1, so a moderately large grid samples directions densely;
reports are labelled as grid-restricted, never as a global proof.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .model import (
    AttackStrategy,
    Grid,
    ProtectPolicy,
    QueueState,
    SystemParams,
    interior_mask,
    successor_tables,
)


class DiagonalStateError(ValueError):
    """Raised for per-state constraints that only exist off the diagonal."""


class Reason(str, enum.Enum):
    CAPACITY_VIOLATED = "capacity-violated"
    FAULTY_ROUTING_OVERLOAD = "faulty-routing-overload"
    DRIFT_CERTIFIED = "drift-certified"
    DRIFT_FAILED_ON_GRID = "drift-failed-on-grid"


@dataclass(frozen=True)
class StabilityVerdict:
    stable: bool
    reason: Reason
    witness: QueueState | None = None
    mean_bound: float | None = None


@dataclass(frozen=True)
class DriftReport:
    """Outcome of a grid-restricted drift certification.

    `c` is the smallest drift coefficient over the audited states, `d` the
    drift offset (lam + n*mu)/2, and `mean_bound` = d/c when c > 0 (else
    +inf).  `witness` is an audited state with a non-positive coefficient
    when certification fails.
    """

    c: float
    d: float
    mean_bound: float
    stable_certificate: bool
    witness: QueueState | None = None
    n_audited: int = 0


def unprotected_stability(params: SystemParams) -> StabilityVerdict:
    """Exact stability verdict for the never-protect system.

    Stable iff lam < n*mu and fault_prob * p_max * lam < mu; when stable the
    long-run mean queue is bounded by
    (lam + n*mu) / (2 * (mu - max(a*p_max, 1/n) * lam)).
    """
    if params.lam >= params.n * params.mu:
        return StabilityVerdict(False, Reason.CAPACITY_VIOLATED)
    if params.fault_prob * params.p_max * params.lam >= params.mu:
        return StabilityVerdict(False, Reason.FAULTY_ROUTING_OVERLOAD)
    c = params.mu - max(params.fault_prob * params.p_max, 1.0 / params.n) * params.lam
    bound = (params.lam + params.n * params.mu) / (2.0 * c)
    return StabilityVerdict(True, Reason.DRIFT_CERTIFIED, mean_bound=bound)


def reliability_drift(params: SystemParams, x: QueueState, b: float) -> float:
    """Exact generator drift of W at x when protecting with probability b."""
    if not 0.0 <= b <= 1.0:
        raise ValueError("protect probability must lie in [0, 1]")
    lam, mu, a = params.lam, params.mu, params.fault_prob
    mass = a * (1.0 - b)
    p_dot_x = sum(p * xi for p, xi in zip(params.routing_probs, x.lengths))
    busy = sum(1 for xi in x.lengths if xi > 0)
    return (
        mass * lam * p_dot_x
        + (1.0 - mass) * lam * x.x_min
        - mu * x.norm1
        + 0.5 * lam
        + 0.5 * mu * busy
    )


def security_drift(params: SystemParams, x: QueueState, a_x: float, b_x: float) -> float:
    """Exact generator drift of W at x under attack/defense probabilities."""
    for name, v in (("attack", a_x), ("protect", b_x)):
        if not 0.0 <= v <= 1.0:
            raise ValueError(f"{name} probability must lie in [0, 1]")
    lam, mu = params.lam, params.mu
    mass = a_x * (1.0 - b_x)
    busy = sum(1 for xi in x.lengths if xi > 0)
    return (
        mass * lam * x.x_max
        + (1.0 - mass) * lam * x.x_min
        - mu * x.norm1
        + 0.5 * lam
        + 0.5 * mu * busy
    )


def protect_floor(params: SystemParams, x: QueueState) -> float:
    """Smallest protection probability with non-positive drift slack at x,
    clipped to [0, 1].

    Defined for non-diagonal states only.  When the faulty displacement
    sum(p_i x_i) - x_min vanishes the floor is 0 if the drift margin
    mu*||x||_1 - lam*x_min is positive (any b suffices) and 1 otherwise
    (no probability can certify the state; certification will flag it).
    """
    if x.is_diagonal:
        raise DiagonalStateError(f"protect_floor undefined on diagonal state {x.lengths}")
    num = params.mu * x.norm1 - params.lam * x.x_min
    p_dot_x = sum(p * xi for p, xi in zip(params.routing_probs, x.lengths))
    den = params.fault_prob * params.lam * (p_dot_x - x.x_min)
    if den <= 0.0:
        return 0.0 if num > 0.0 else 1.0
    return min(1.0, max(0.0, 1.0 - num / den))


def attack_ceiling(params: SystemParams, x: QueueState) -> float:
    """Largest effective attack mass a(x)(1-b(x)) with stable drift at x.

    Drift at x is negative (up to the constant offset) whenever the realized
    attack mass is strictly below this value.  Diagonal states carry no
    constraint (x_max = x_min).
    """
    if x.is_diagonal:
        raise DiagonalStateError(f"attack_ceiling undefined on diagonal state {x.lengths}")
    num = params.mu * x.norm1 - params.lam * x.x_min
    return num / (params.lam * (x.x_max - x.x_min))


def protect_floor_map(params: SystemParams, grid: Grid) -> np.ndarray:
    """Vector of clipped protection floors over the grid; 0 on diagonal states."""
    tab = successor_tables(grid)
    p_dot_x = tab.states @ params.p
    num = params.mu * tab.norm1 - params.lam * tab.xmin
    den = params.fault_prob * params.lam * (p_dot_x - tab.xmin)
    with np.errstate(divide="ignore", invalid="ignore"):
        floor = np.clip(1.0 - num / den, 0.0, 1.0)
    floor[den <= 0.0] = np.where(num[den <= 0.0] > 0.0, 0.0, 1.0)
    floor[tab.is_diagonal] = 0.0
    return floor


def attack_ceiling_map(params: SystemParams, grid: Grid) -> np.ndarray:
    """Vector of attack ceilings over the grid; +inf on diagonal states."""
    tab = successor_tables(grid)
    num = params.mu * tab.norm1 - params.lam * tab.xmin
    gap = (tab.xmax - tab.xmin).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        ceil = num / (params.lam * gap)
    ceil[tab.is_diagonal] = np.inf
    return ceil


def drift_coefficients(
    params: SystemParams,
    grid: Grid,
    policy: ProtectPolicy,
    attack: AttackStrategy | None = None,
) -> np.ndarray:
    """Per-state drift coefficients c(x) over the grid (nan at the origin).

    Stability of the audited region needs min c(x) > 0; the drift then obeys
    L W(x) <= -c(x) * ||x||_1 + (lam + n*mu)/2.
    """
    if policy.grid != grid:
        raise ValueError("policy is defined on a different grid")
    if attack is not None and attack.grid != grid:
        raise ValueError("attack strategy is defined on a different grid")
    tab = successor_tables(grid)
    if attack is None:
        mass = params.fault_prob * (1.0 - policy.probs)
        disp = tab.states @ params.p - tab.xmin
    else:
        mass = attack.probs * (1.0 - policy.probs)
        disp = (tab.xmax - tab.xmin).astype(np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        coeff = (
            params.mu
            - params.lam * tab.xmin / tab.norm1
            - mass * params.lam * disp / tab.norm1
        )
    coeff[tab.norm1 == 0] = np.nan
    return coeff


def certify_policy(
    params: SystemParams,
    grid: Grid,
    policy: ProtectPolicy,
    attack: AttackStrategy | None = None,
) -> DriftReport:
    """Grid-restricted drift certificate for a strategy pair.

    Minimizes the drift coefficient over the non-zero states outside the
    boundary band.  A non-positive minimum yields a witness state and no
    certificate.
    """
    coeff = drift_coefficients(params, grid, policy, attack)
    audited = interior_mask(grid) & ~np.isnan(coeff)
    n_audited = int(audited.sum())
    if n_audited == 0:
        raise ValueError("no audited states: grid too small for its boundary margin")
    idx = np.flatnonzero(audited)
    best = idx[np.argmin(coeff[idx])]
    c = float(coeff[best])
    d = 0.5 * (params.lam + params.n * params.mu)
    certified = c > 0.0
    states = successor_tables(grid).states
    witness = None if certified else QueueState(tuple(states[best]))
    return DriftReport(
        c=c,
        d=d,
        mean_bound=d / c if certified else np.inf,
        stable_certificate=certified,
        witness=witness,
        n_audited=n_audited,
    )


def verdict_from_report(report: DriftReport) -> StabilityVerdict:
    """Fold a drift certificate into a verdict record."""
    if report.stable_certificate:
        return StabilityVerdict(True, Reason.DRIFT_CERTIFIED, mean_bound=report.mean_bound)
    return StabilityVerdict(False, Reason.DRIFT_FAILED_ON_GRID, witness=report.witness)
