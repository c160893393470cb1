"""Zero-sum attacker-defender game on the truncated grid: per-state 2x2
auxiliary games solved in closed form, minimax value iteration, risk
labelling, equilibrium audits, and cost-regime sweeps.

Rows of the auxiliary game are the attacker's actions (no-attack, attack),
columns the defender's (no-protect, protect); the row player maximizes.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field

import numpy as np

from .engine import kernels
from .model import (
    AttackStrategy,
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
from .reliability import BoundaryStateError, SolverConfig

GAME_SHAPE_TOL = 1e-9


class RiskLabel(enum.IntEnum):
    """Security-risk class of a state: S1 low, S2 medium, S3 high."""

    S1 = 1
    S2 = 2
    S3 = 3


@dataclass(frozen=True)
class MatrixGame2x2:
    """Auxiliary one-step game at a state: a common offset plus the
    structural part [[0, cb], [-ca + delta, -ca + cb]]."""

    entries: np.ndarray
    offset: float

    def __post_init__(self) -> None:
        entries = np.asarray(self.entries, dtype=np.float64)
        if entries.shape != (2, 2):
            raise ValueError("entries must be a 2x2 array")
        object.__setattr__(self, "entries", entries)


@dataclass(frozen=True)
class EquilibriumPoint:
    attack_prob: float
    protect_prob: float
    value: float
    label: RiskLabel


def game_value_gain(delta: float, ca: float, cb: float) -> float:
    """Minimax value of the structural part: max{0, min{delta - ca,
    cb - ca*cb/delta}} for delta > 0, else 0."""
    if delta <= ca:
        return 0.0
    if delta <= cb:
        return delta - ca
    return cb - ca * cb / delta


def build_matrix_game(offset: float, ca: float, cb: float, delta: float) -> MatrixGame2x2:
    entries = offset + np.array([[0.0, cb], [-ca + delta, -ca + cb]])
    return MatrixGame2x2(entries=entries, offset=offset)


def solve_2x2(game: MatrixGame2x2, ca: float, cb: float, delta: float) -> EquilibriumPoint:
    """Equilibrium of the auxiliary game by its closed-form case split.

    delta <= ca: neither moves (low risk); ca < delta <= cb: attack without
    defense (medium risk, needs cb > ca); delta > max(ca, cb): the mixed
    saddle (cb/delta, 1 - ca/delta) (high risk).
    """
    expected = build_matrix_game(game.offset, ca, cb, delta).entries
    if not np.allclose(game.entries, expected, rtol=0.0, atol=GAME_SHAPE_TOL):
        raise ValueError("matrix game does not have the structural auxiliary form")
    if delta <= ca:
        return EquilibriumPoint(0.0, 0.0, game.offset, RiskLabel.S1)
    if delta <= cb:
        return EquilibriumPoint(1.0, 0.0, game.offset - ca + delta, RiskLabel.S2)
    return EquilibriumPoint(
        cb / delta,
        1.0 - ca / delta,
        game.offset + cb - ca * cb / delta,
        RiskLabel.S3,
    )


def delta_sec(values: ValueTable, x: QueueState,
              uni: UniformizedParams) -> float:
    """Attack advantage lam_tilde * (V(x+e_max) - V(x+e_min)), lowest-index
    extremizers.  Only defined where no successor clamps."""
    grid = values.grid
    if x.x_max >= grid.bound:
        raise BoundaryStateError(
            f"state {x.lengths} has clamped successors; advantage is biased there")
    s = grid.index_of(x.lengths)
    tab = successor_tables(grid)
    V = values.values
    return uni.lambda_tilde * float(V[tab.upmax[s]] - V[tab.upmin[s]])


def delta_sec_map(values: ValueTable,
                  uni: UniformizedParams) -> tuple[np.ndarray, np.ndarray]:
    """Attack advantage per state (clamped successors) plus a validity mask."""
    grid = values.grid
    tab = successor_tables(grid)
    V = values.values
    d = uni.lambda_tilde * (V[tab.upmax] - V[tab.upmin])
    return d, tab.xmax < grid.bound


def _classify(delta: np.ndarray, ca: float, cb: float):
    labels = np.full(delta.shape, int(RiskLabel.S1), dtype=np.int8)
    s2 = (delta > ca) & (delta <= cb)
    s3 = delta > max(ca, cb)
    labels[s2] = int(RiskLabel.S2)
    labels[s3] = int(RiskLabel.S3)
    attack = np.zeros_like(delta)
    protect = np.zeros_like(delta)
    attack[s2] = 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        attack[s3] = cb / delta[s3]
        protect[s3] = 1.0 - ca / delta[s3]
    return labels, attack, protect


@dataclass(frozen=True)
class GameSolveReport:
    value: ValueTable
    attack: AttackStrategy
    protect: ProtectPolicy
    labels: np.ndarray  # int8 RiskLabel values per state
    delta: np.ndarray  # operative attack advantage per state (clamped)
    iterations: int
    residual: float
    converged: bool
    residuals: np.ndarray = field(default_factory=lambda: np.empty(0))


def shapley_iteration(params: SystemParams, grid: Grid,
                      config: SolverConfig | None = None) -> GameSolveReport:
    """Minimax value iteration: V(x) <- val(M(x, V)) until the sup-norm
    change drops below epsilon, then re-solve each state's game to emit the
    equilibrium strategies and risk labels.

    In-place sweeps over grid order by default; 'synchronous' mirrors the
    MDP solver for contraction checks.
    """
    config = config or SolverConfig()
    scheme = config.update_scheme or "in-place"
    uni = uniformize(params)
    tab = successor_tables(grid)
    args = (tab.down, tab.upmin, tab.upmax, tab.norm1,
            uni.lambda_tilde, uni.mu_tilde, params.attack_cost, params.protect_cost)

    V = np.zeros(grid.size)
    residuals = []
    converged = False
    if scheme == "in-place":
        for _ in range(config.max_iterations):
            resid = kernels.shapley_sweep_inplace(V, *args)
            residuals.append(resid)
            if resid < config.epsilon:
                converged = True
                break
    else:
        other = np.empty_like(V)
        for _ in range(config.max_iterations):
            resid = kernels.shapley_sweep_sync(V, other, *args)
            residuals.append(resid)
            V, other = other, V
            if resid < config.epsilon:
                converged = True
                break

    value = ValueTable(grid, V)
    d, _ = delta_sec_map(value, uni)
    labels, attack, protect = _classify(d, params.attack_cost, params.protect_cost)
    return GameSolveReport(
        value=value,
        attack=AttackStrategy(grid, attack),
        protect=ProtectPolicy(grid, protect),
        labels=labels,
        delta=d,
        iterations=len(residuals),
        residual=float(residuals[-1]),
        converged=converged,
        residuals=np.asarray(residuals),
    )


@dataclass(frozen=True)
class EquilibriumViolation:
    state: QueueState
    kind: str  # 'attacker-gain' | 'defender-gain' | 'delta-monotonicity' | 'negative-delta'
    magnitude: float


def equilibrium_audit(value: ValueTable, attack: AttackStrategy,
                      protect: ProtectPolicy, params: SystemParams,
                      tol_br: float = 1e-6,
                      tol_mono: float = 1e-7) -> list[EquilibriumViolation]:
    """Audit a converged solution.

    Best-response check at every grid state: neither player improves the
    one-step game value by more than tol_br with a pure deviation against
    the opponent's emitted mix.  Advantage-monotonicity check per the
    threshold directions (toward e_argmax, and as the shortest queue
    drains), restricted to inequalities whose operands both lie in the
    trusted interior; advantage values inside the boundary margin carry
    truncation bias and are never compared.  Negative advantages beyond
    tolerance are flagged rather than assumed away.
    """
    grid = value.grid
    uni = uniformize(params)
    tab = successor_tables(grid)
    ca, cb = params.attack_cost, params.protect_cost
    V = value.values
    d, _ = delta_sec_map(value, uni)

    acc = V[tab.down[0]].copy()
    for i in range(1, grid.n):
        acc = acc + V[tab.down[i]]
    offset = tab.norm1 + uni.mu_tilde * acc + uni.lambda_tilde * V[tab.upmin]
    gain = np.array([game_value_gain(dx, ca, cb) for dx in d])
    vstar = offset + gain

    a_star = attack.probs
    b_star = protect.probs

    def payoff(a, b):
        return offset + b * cb - a * ca + a * (1.0 - b) * d

    violations: list[EquilibriumViolation] = []
    states = tab.states
    atk_best = np.maximum(payoff(0.0, b_star), payoff(1.0, b_star))
    for s in np.flatnonzero(atk_best > vstar + tol_br):
        violations.append(EquilibriumViolation(
            QueueState(tuple(states[s])), "attacker-gain", float(atk_best[s] - vstar[s])))
    def_best = np.minimum(payoff(a_star, 0.0), payoff(a_star, 1.0))
    for s in np.flatnonzero(def_best < vstar - tol_br):
        violations.append(EquilibriumViolation(
            QueueState(tuple(states[s])), "defender-gain", float(vstar[s] - def_best[s])))

    audit = interior_mask(grid)
    up_l = tab.up[tab.argmax, np.arange(grid.size)]
    upmax_d = d[up_l]
    bad = audit & audit[up_l] & (upmax_d < d - tol_mono)
    for s in np.flatnonzero(bad):
        violations.append(EquilibriumViolation(
            QueueState(tuple(states[s])), "delta-monotonicity",
            float(d[s] - upmax_d[s])))
    mask = audit & (tab.xmin > 0)
    down_d = d[tab.downmin]
    bad = mask & (down_d < d - tol_mono)
    for s in np.flatnonzero(bad):
        violations.append(EquilibriumViolation(
            QueueState(tuple(states[s])), "delta-monotonicity",
            float(d[s] - down_d[s])))
    bad = audit & (d < -tol_mono)
    for s in np.flatnonzero(bad):
        violations.append(EquilibriumViolation(
            QueueState(tuple(states[s])), "negative-delta", float(-d[s])))
    return violations


@dataclass(frozen=True)
class RegimeSweepResult:
    """Map from technological-cost pairs to the set of risk labels present."""

    ca_values: tuple[float, ...]
    cb_values: tuple[float, ...]
    regimes: np.ndarray  # object array of strings like 'S1+S3' or 'unknown'
    converged: np.ndarray
    consistency_violations: tuple[str, ...]


def regime_label(labels: np.ndarray, mask: np.ndarray) -> str:
    present = sorted(set(int(v) for v in labels[mask]))
    return "+".join(RiskLabel(v).name for v in present)


def regime_sweep(params: SystemParams, grid: Grid, config: SolverConfig,
                 ca_values, cb_values) -> RegimeSweepResult:
    """Solve the game across a (attack cost, protect cost) lattice and label
    each cell with the risk classes present on the interior grid.

    Cells whose solve does not converge are labelled 'unknown' rather than
    guessed.  A medium-risk class appearing where the attack cost exceeds
    the protect cost is recorded as a consistency violation.
    """
    ca_values = tuple(float(v) for v in ca_values)
    cb_values = tuple(float(v) for v in cb_values)
    regimes = np.empty((len(ca_values), len(cb_values)), dtype=object)
    converged = np.zeros(regimes.shape, dtype=bool)
    inner = interior_mask(grid)
    violations = []
    for ia, ca in enumerate(ca_values):
        for ic, cb in enumerate(cb_values):
            cell = dataclasses.replace(params, attack_cost=ca, protect_cost=cb)
            report = shapley_iteration(cell, grid, config)
            converged[ia, ic] = report.converged
            if not report.converged:
                regimes[ia, ic] = "unknown"
                continue
            label = regime_label(report.labels, inner)
            regimes[ia, ic] = label
            if "S2" in label and not cb > ca:
                violations.append(
                    f"medium-risk states at ca={ca}, cb={cb} despite ca >= cb")
    return RegimeSweepResult(ca_values, cb_values, regimes, converged,
                             tuple(violations))
