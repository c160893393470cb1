import numpy as np
import pytest

from jsqguard.model import (
    Grid,
    ProtectPolicy,
    QueueState,
    SystemParams,
    ValueTable,
    contraction_factor,
    enumerate_states,
    interior_mask,
    successor_tables,
    uniformize,
)
from jsqguard.reliability import (
    BoundaryStateError,
    SolverConfig,
    bellman_backup,
    delta,
    delta_map,
    greedy_policy,
    monotonicity_audit,
    tipping_point_sweep,
    truncated_policy_iteration,
    value_iteration,
)
from jsqguard.stability import certify_policy, protect_floor_map

from _oracles import evaluate_policy_exact


def make_params(**kw):
    base = dict(n=2, lam=1.0, mu=1.0, gamma=1.0, protect_cost=0.1,
                fault_prob=0.9, routing_probs=(0.1, 0.9))
    base.update(kw)
    return SystemParams(**base)


class TestBackup:
    def test_zero_table_backup_is_norm(self):
        p = make_params()
        g = Grid(n=2, bound=4)
        zero = ValueTable(g, np.zeros(g.size))
        for lengths in [(0, 0), (2, 1), (4, 4)]:
            v, b = bellman_backup(zero, QueueState(lengths), p)
            assert v == pytest.approx(sum(lengths))
            assert b == 0

    def test_no_failures_never_protect(self):
        p = make_params(fault_prob=0.0)
        g = Grid(n=2, bound=5)
        rep = value_iteration(p, g)
        assert rep.converged
        assert np.all(rep.policy.probs == 0.0)

    def test_symmetric_diagonal_not_protected(self):
        p = make_params(routing_probs=(0.5, 0.5))
        g = Grid(n=2, bound=6)
        rep = value_iteration(p, g, SolverConfig(epsilon=1e-10))
        tab = successor_tables(g)
        assert np.all(rep.policy.probs[tab.is_diagonal] == 0.0)

    def test_backup_outside_grid(self):
        p = make_params()
        g = Grid(n=2, bound=3)
        zero = ValueTable(g, np.zeros(g.size))
        with pytest.raises(IndexError):
            bellman_backup(zero, QueueState((4, 0)), p)


class TestValueIteration:
    def test_matches_exact_policy_evaluation(self):
        p = make_params()
        g = Grid(n=2, bound=2)
        rep = value_iteration(p, g, SolverConfig(epsilon=1e-12))
        assert rep.converged
        exact = evaluate_policy_exact(p, g, rep.policy.probs)
        assert np.max(np.abs(rep.value.values - exact)) < 1e-10

    def test_single_queue_never_protects(self):
        p = SystemParams(n=1, lam=0.6, mu=1.0, gamma=0.5, protect_cost=0.05,
                         fault_prob=0.9, routing_probs=(1.0,))
        rep = value_iteration(p, Grid(n=1, bound=20))
        assert np.all(rep.policy.probs == 0.0)

    def test_residual_contraction(self):
        p = make_params(lam=1.3, gamma=0.8)
        g = Grid(n=2, bound=10)
        rep = value_iteration(p, g, SolverConfig(epsilon=1e-13,
                                                 update_scheme="synchronous"))
        kappa = contraction_factor(p)
        res = rep.residuals
        ratios = [res[i + 1] / res[i] for i in range(5, len(res) - 1)
                  if res[i] > 1e-3]
        assert max(ratios) <= kappa + 1e-9

    def test_policy_is_deterministic(self):
        rep = value_iteration(make_params(), Grid(n=2, bound=8))
        assert rep.policy.is_deterministic

    def test_nonconvergence_reported(self):
        rep = value_iteration(make_params(), Grid(n=2, bound=8),
                              SolverConfig(epsilon=1e-12, max_iterations=3))
        assert not rep.converged
        assert rep.iterations == 3
        assert rep.residual >= 1e-12

    def test_inplace_and_sync_reach_same_fixed_point(self):
        p = make_params(lam=1.5, gamma=2.0)
        g = Grid(n=2, bound=7)
        a = value_iteration(p, g, SolverConfig(epsilon=1e-12, update_scheme="in-place"))
        b = value_iteration(p, g, SolverConfig(epsilon=1e-12, update_scheme="synchronous"))
        assert np.max(np.abs(a.value.values - b.value.values)) < 1e-10


class TestTruncatedPolicyIteration:
    def test_agrees_with_value_iteration(self):
        p = make_params()
        g = Grid(n=2, bound=6)
        eps = 1e-8
        vi = value_iteration(p, g, SolverConfig(epsilon=eps))
        tpi = truncated_policy_iteration(p, g, SolverConfig(epsilon=eps))
        assert tpi.converged
        assert np.max(np.abs(vi.value.values - tpi.value.values)) < 10 * eps
        assert np.array_equal(vi.policy.probs, tpi.policy.probs)

    def test_synchronous_scheme_reaches_same_answer(self):
        p = make_params(gamma=2.0)
        g = Grid(n=2, bound=6)
        a = truncated_policy_iteration(p, g, SolverConfig(epsilon=1e-10))
        b = truncated_policy_iteration(
            p, g, SolverConfig(epsilon=1e-10, update_scheme="synchronous"))
        assert b.converged
        assert np.array_equal(a.policy.probs, b.policy.probs)
        assert np.max(np.abs(a.value.values - b.value.values)) < 1e-8

    def test_no_failures_terminates_immediately(self):
        p = make_params(fault_prob=0.0)
        rep = truncated_policy_iteration(p, Grid(n=2, bound=5))
        assert rep.converged
        assert np.all(rep.policy.probs == 0.0)

    def test_constrained_respects_floor_everywhere(self):
        # overload regime: the unconstrained optimum violates the floor
        p = make_params(lam=1.8, protect_cost=0.05, gamma=8.0)
        g = Grid(n=2, bound=20, boundary_margin=4)
        floors = protect_floor_map(p, g)
        plain = truncated_policy_iteration(p, g, SolverConfig(epsilon=1e-9))
        assert np.any(plain.policy.probs < floors - 1e-9)
        constrained = truncated_policy_iteration(
            p, g, SolverConfig(epsilon=1e-9, stability_constrained=True))
        assert constrained.converged
        assert np.all(constrained.policy.probs >= floors - 1e-15)
        tab = successor_tables(g)
        nond = ~tab.is_diagonal
        assert np.all(constrained.policy.probs[nond] >= floors[nond])

    def test_constrained_floor_states_sit_at_zero_drift_margin(self):
        # states assigned exactly the floor have drift coefficient 0, so the
        # grid certificate is marginal (not strictly positive) by design
        p = make_params(lam=1.8, protect_cost=0.05, gamma=8.0)
        g = Grid(n=2, bound=20, boundary_margin=4)
        constrained = truncated_policy_iteration(
            p, g, SolverConfig(epsilon=1e-9, stability_constrained=True))
        floors = protect_floor_map(p, g)
        at_floor = (constrained.policy.probs == floors) & (floors > 0.0)
        if at_floor.any():
            rep = certify_policy(p, g, constrained.policy)
            assert abs(rep.c) <= 1e-9
        else:
            pytest.skip("improvement protected every positive-floor state")


class TestDelta:
    def test_norm_table_gives_zero_advantage(self):
        p = make_params()
        g = Grid(n=2, bound=6)
        tab = successor_tables(g)
        norm_table = ValueTable(g, tab.norm1.copy())
        d, valid = delta_map(norm_table, p)
        assert np.max(np.abs(d[valid])) < 1e-12
        assert delta(norm_table, QueueState((1, 2)), p) == pytest.approx(0.0, abs=1e-12)

    def test_boundary_state_raises(self):
        p = make_params()
        g = Grid(n=2, bound=4)
        table = ValueTable(g, np.zeros(g.size))
        with pytest.raises(BoundaryStateError):
            delta(table, QueueState((4, 1)), p)

    def test_threshold_rule_matches_greedy_policy(self):
        p = make_params(gamma=2.0)
        g = Grid(n=2, bound=10)
        uni = uniformize(p)
        rep = value_iteration(p, g, SolverConfig(epsilon=1e-11))
        d, valid = delta_map(rep.value, p)
        thr = p.protect_cost / (p.fault_prob * uni.lambda_tilde)
        expected = (d > thr).astype(float)
        assert np.array_equal(rep.policy.probs[valid], expected[valid])


class TestMonotonicityAudit:
    def test_converged_solution_clean(self):
        p = make_params(gamma=8.0, protect_cost=9e-4)
        g = Grid(n=2, bound=30, boundary_margin=6)
        rep = value_iteration(p, g, SolverConfig(epsilon=1e-13))
        assert monotonicity_audit(rep.value, p, tol=1e-7) == []

    def test_norm_table_vacuously_monotone(self):
        p = make_params()
        g = Grid(n=2, bound=6)
        tab = successor_tables(g)
        assert monotonicity_audit(ValueTable(g, tab.norm1.copy()), p) == []

    def test_perturbed_table_flagged(self):
        p = make_params(gamma=8.0, protect_cost=9e-4)
        g = Grid(n=2, bound=30, boundary_margin=6)
        rep = value_iteration(p, g, SolverConfig(epsilon=1e-13))
        bumped = rep.value.values.copy()
        bumped[g.index_of((4, 7))] += 1.0
        violations = monotonicity_audit(ValueTable(g, bumped), p, tol=1e-7)
        assert len(violations) >= 1
        assert max(v.deficit for v in violations) > 1e-3


class TestThreeQueues:
    def test_solver_and_audit_on_three_queues(self):
        p = SystemParams(n=3, lam=1.2, mu=1.0, gamma=8.0, protect_cost=5e-4,
                         fault_prob=0.8, routing_probs=(0.1, 0.2, 0.7))
        g = Grid(n=3, bound=10, boundary_margin=5)
        rep = value_iteration(p, g, SolverConfig(epsilon=1e-12))
        assert rep.converged
        assert rep.policy.is_deterministic
        assert monotonicity_audit(rep.value, p, tol=1e-7) == []
        tab = successor_tables(g)
        inner = interior_mask(g)
        assert np.all(rep.policy.probs[inner & tab.is_diagonal] == 0.0)
        assert rep.policy.probs[inner].sum() > 0  # protects somewhere inside
        tpi = truncated_policy_iteration(p, g, SolverConfig(epsilon=1e-12))
        assert np.array_equal(tpi.policy.probs, rep.policy.probs)


class TestTippingSweep:
    def test_zero_fault_column_and_monotone_frontier(self):
        p = make_params(lam=1.6, routing_probs=(0.1, 0.9))
        g = Grid(n=2, bound=8, boundary_margin=2)
        res = tipping_point_sweep(
            p, g, SolverConfig(epsilon=1e-8),
            a_values=(0.0, 0.3, 0.6, 0.9),
            cb_values=(1e-4, 0.05, 0.3, 2.0),
        )
        assert res.converged.all()
        assert not res.protects[0].any()  # no faults, nothing to protect
        assert res.protects[3, 0]  # near-free protection under heavy faults
        assert res.monotonicity_violations == ()

    def test_higher_utilization_dominates(self):
        g = Grid(n=2, bound=8, boundary_margin=2)
        cfg = SolverConfig(epsilon=1e-8)
        a_values = (0.2, 0.5, 0.8)
        cb_values = (0.001, 0.01, 0.1)
        hi = tipping_point_sweep(make_params(lam=1.6, routing_probs=(0.1, 0.9)),
                                 g, cfg, a_values, cb_values)
        lo = tipping_point_sweep(make_params(lam=0.4, routing_probs=(0.1, 0.9)),
                                 g, cfg, a_values, cb_values)
        assert np.all(hi.protects >= lo.protects)
        assert hi.protects.sum() > lo.protects.sum()
