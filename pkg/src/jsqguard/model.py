"""Core model types: system parameters, queue states, truncated grids,
uniformization, and the dense per-state tables used by every solver.

All types are immutable value objects after construction and can be shared
freely between workers.  Server indices in the public operations are 1-based.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache
from typing import Iterable

import numpy as np

PROB_SUM_TOL = 1e-12


@dataclass(frozen=True)
class SystemParams:
    """Scalar parameters of an n-server system with failure-prone routing.

    `lam` is the Poisson arrival rate, `mu` the per-server exponential
    service rate and `gamma` the continuous-time discount rate.  An
    unprotected arrival is routed at random with probabilities
    `routing_probs` when a fault strikes (probability `fault_prob`), or to
    the longest queue when an attack lands.  `protect_cost` and
    `attack_cost` are the technological cost rates of the defender and the
    attacker.
    """

    n: int
    lam: float
    mu: float
    gamma: float
    protect_cost: float
    fault_prob: float = 0.0
    routing_probs: tuple[float, ...] | None = None
    attack_cost: float = 1.0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        for name in ("lam", "mu", "gamma", "protect_cost", "attack_cost"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if not 0.0 <= self.fault_prob <= 1.0:
            raise ValueError("fault_prob must lie in [0, 1]")
        probs = self.routing_probs
        if probs is None:
            probs = (1.0 / self.n,) * self.n
        else:
            probs = tuple(float(v) for v in probs)
        object.__setattr__(self, "routing_probs", probs)
        if len(probs) != self.n:
            raise ValueError("routing_probs must have one entry per server")
        if any(v < 0.0 or v > 1.0 for v in probs):
            raise ValueError("routing probabilities must lie in [0, 1]")
        if abs(sum(probs) - 1.0) > PROB_SUM_TOL:
            raise ValueError("routing probabilities must sum to 1")

    @property
    def utilization(self) -> float:
        """Demand over total capacity, lam / (n * mu)."""
        return self.lam / (self.n * self.mu)

    @property
    def p_max(self) -> float:
        return max(self.routing_probs)

    @property
    def p(self) -> np.ndarray:
        return np.asarray(self.routing_probs, dtype=np.float64)


@dataclass(frozen=True)
class QueueState:
    """A vector of non-negative queue lengths."""

    lengths: tuple[int, ...]

    def __post_init__(self) -> None:
        lengths = tuple(int(v) for v in self.lengths)
        object.__setattr__(self, "lengths", lengths)
        if not lengths:
            raise ValueError("state must have at least one queue")
        if any(v < 0 for v in lengths):
            raise ValueError("queue lengths must be non-negative")

    @property
    def n(self) -> int:
        return len(self.lengths)

    @property
    def norm1(self) -> int:
        return sum(self.lengths)

    @property
    def x_min(self) -> int:
        return min(self.lengths)

    @property
    def x_max(self) -> int:
        return max(self.lengths)

    @property
    def is_diagonal(self) -> bool:
        return self.x_min == self.x_max


@dataclass(frozen=True)
class Grid:
    """Truncated state grid {0..bound}^n in lexicographic order, x1 slowest.

    `boundary_margin` is the width of the band near the bound excluded from
    audits; defaults to max(2, bound // 5), capped at bound - 1.
    """

    n: int
    bound: int
    boundary_margin: int | None = None

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("n must be a positive integer")
        if self.bound < 1:
            raise ValueError("bound must be at least 1")
        margin = self.boundary_margin
        if margin is None:
            margin = min(max(2, self.bound // 5), self.bound - 1)
        margin = int(margin)
        if margin < 0 or margin >= self.bound:
            raise ValueError("boundary_margin must satisfy 0 <= margin < bound")
        object.__setattr__(self, "boundary_margin", margin)

    @property
    def size(self) -> int:
        return (self.bound + 1) ** self.n

    @property
    def strides(self) -> tuple[int, ...]:
        return tuple((self.bound + 1) ** (self.n - 1 - k) for k in range(self.n))

    def index_of(self, lengths: Iterable[int]) -> int:
        idx = 0
        for x, stride in zip(lengths, self.strides, strict=True):
            if x < 0 or x > self.bound:
                raise IndexError(f"state coordinate {x} outside grid bound {self.bound}")
            idx += int(x) * stride
        return idx

    def clamped_index_of(self, lengths: Iterable[int]) -> int:
        """Index of the coordinate-wise clamped state (policy extension rule)."""
        idx = 0
        for x, stride in zip(lengths, self.strides, strict=True):
            idx += min(max(int(x), 0), self.bound) * stride
        return idx

    def contains(self, lengths: Iterable[int]) -> bool:
        vals = tuple(lengths)
        return len(vals) == self.n and all(0 <= v <= self.bound for v in vals)


@dataclass(frozen=True)
class UniformizedParams:
    """Event-rate-normalized rates; scale = gamma + lam + n*mu."""

    lambda_tilde: float
    mu_tilde: float
    scale: float


def uniformize(params: SystemParams) -> UniformizedParams:
    """Normalize rates by the total event rate plus discount."""
    scale = params.gamma + params.lam + params.n * params.mu
    return UniformizedParams(
        lambda_tilde=params.lam / scale,
        mu_tilde=params.mu / scale,
        scale=scale,
    )


def contraction_factor(params: SystemParams) -> float:
    """Sup-norm contraction factor (lam + n*mu) / (gamma + lam + n*mu) < 1."""
    return (params.lam + params.n * params.mu) / (
        params.gamma + params.lam + params.n * params.mu
    )


def successor_up(x: QueueState, server: int, grid: Grid) -> QueueState:
    """x + e_server with the coordinate clamped at grid.bound. 1-based index."""
    if not 1 <= server <= x.n:
        raise IndexError(f"server index {server} out of range 1..{x.n}")
    lengths = list(x.lengths)
    lengths[server - 1] = min(lengths[server - 1] + 1, grid.bound)
    return QueueState(tuple(lengths))


def successor_down(x: QueueState, server: int) -> QueueState:
    """(x - e_server)^+, never negative. 1-based index."""
    if not 1 <= server <= x.n:
        raise IndexError(f"server index {server} out of range 1..{x.n}")
    lengths = list(x.lengths)
    lengths[server - 1] = max(lengths[server - 1] - 1, 0)
    return QueueState(tuple(lengths))


def argmin_server(x: QueueState) -> int:
    """1-based index of the shortest queue; ties break to the lowest index."""
    return min(range(x.n), key=lambda i: (x.lengths[i], i)) + 1


def argmax_server(x: QueueState) -> int:
    """1-based index of the longest queue; ties break to the lowest index."""
    return max(range(x.n), key=lambda i: (x.lengths[i], -i)) + 1


@lru_cache(maxsize=None)
def _states_cached(n: int, bound: int) -> np.ndarray:
    axes = np.meshgrid(*([np.arange(bound + 1)] * n), indexing="ij")
    states = np.stack(axes, axis=-1).reshape(-1, n).astype(np.int64)
    states.setflags(write=False)
    return states


def enumerate_states(grid: Grid) -> np.ndarray:
    """All grid states as an (size, n) array in grid order."""
    return _states_cached(grid.n, grid.bound)


class SuccessorTables:
    """Dense per-state index tables shared by the solver kernels.

    up[i, s] / down[i, s] index the clamped up/positive-part down successors
    of state s in direction i (0-based here); upmin / upmax use the
    lowest-index extremizer.
    """

    def __init__(self, grid: Grid):
        states = enumerate_states(grid)
        strides = np.asarray(grid.strides, dtype=np.int64)
        idx = np.arange(grid.size, dtype=np.int64)
        n = grid.n

        self.states = states
        self.up = np.empty((n, grid.size), dtype=np.int64)
        self.down = np.empty((n, grid.size), dtype=np.int64)
        for i in range(n):
            self.up[i] = idx + strides[i] * (states[:, i] < grid.bound)
            self.down[i] = idx - strides[i] * (states[:, i] > 0)

        amin = np.argmin(states, axis=1)  # first occurrence = lowest index
        amax = np.argmax(states, axis=1)
        self.argmin = amin
        self.argmax = amax
        self.upmin = self.up[amin, idx]
        self.upmax = self.up[amax, idx]
        self.downmin = self.down[amin, idx]
        self.norm1 = states.sum(axis=1).astype(np.float64)
        self.xmin = states.min(axis=1)
        self.xmax = states.max(axis=1)
        self.is_diagonal = self.xmin == self.xmax
        for arr in (self.up, self.down, self.upmin, self.upmax, self.downmin,
                    self.norm1, self.xmin, self.xmax, self.is_diagonal):
            arr.setflags(write=False)


@lru_cache(maxsize=None)
def successor_tables(grid: Grid) -> SuccessorTables:
    return SuccessorTables(grid)


def interior_mask(grid: Grid, margin: int | None = None) -> np.ndarray:
    """Boolean mask of audit-trusted states: every coordinate strictly more
    than `margin` below the bound.  States within the margin of the bound
    carry truncation bias and are never audited."""
    if margin is None:
        margin = grid.boundary_margin
    tab = successor_tables(grid)
    return tab.xmax < grid.bound - margin


def _check_table(grid: Grid, values: np.ndarray, lo: float | None, hi: float | None,
                 what: str) -> np.ndarray:
    arr = np.ascontiguousarray(values, dtype=np.float64)
    if arr.shape != (grid.size,):
        raise ValueError(f"{what} must have shape ({grid.size},), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{what} contains non-finite entries")
    if lo is not None and (arr.min() < lo or arr.max() > hi):
        raise ValueError(f"{what} entries must lie in [{lo}, {hi}]")
    return arr


@dataclass(frozen=True)
class ValueTable:
    """Dense scaled value function over a grid (units of scale * J)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "values", _check_table(self.grid, self.values, None, None, "values")
        )

    def lookup(self, lengths: Iterable[int]) -> float:
        return float(self.values[self.grid.index_of(lengths)])

    def lookup_clamped(self, lengths: Iterable[int]) -> float:
        return float(self.values[self.grid.clamped_index_of(lengths)])


@dataclass(frozen=True)
class ProtectPolicy:
    """Per-state protection probabilities b(x) in [0, 1]."""

    grid: Grid
    probs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "probs", _check_table(self.grid, self.probs, 0.0, 1.0, "probs")
        )

    @classmethod
    def never(cls, grid: Grid) -> "ProtectPolicy":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def always(cls, grid: Grid) -> "ProtectPolicy":
        return cls(grid, np.ones(grid.size))

    @property
    def is_deterministic(self) -> bool:
        return bool(np.all((self.probs == 0.0) | (self.probs == 1.0)))


@dataclass(frozen=True)
class AttackStrategy:
    """Per-state attack probabilities a(x) in [0, 1]."""

    grid: Grid
    probs: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(
            self, "probs", _check_table(self.grid, self.probs, 0.0, 1.0, "probs")
        )

    @classmethod
    def never(cls, grid: Grid) -> "AttackStrategy":
        return cls(grid, np.zeros(grid.size))

    @classmethod
    def always(cls, grid: Grid) -> "AttackStrategy":
        return cls(grid, np.ones(grid.size))
