import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jsqguard.model import (
    AttackStrategy,
    Grid,
    ProtectPolicy,
    QueueState,
    SystemParams,
    ValueTable,
    interior_mask,
    successor_tables,
    uniformize,
)
from jsqguard.reliability import BoundaryStateError, SolverConfig, value_iteration
from jsqguard.security import (
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

from _oracles import solve_zero_sum_2x2


def game_params(**kw):
    base = dict(n=2, lam=1.0, mu=1.0, gamma=4.0 / 3.0, protect_cost=0.2,
                attack_cost=0.1)
    base.update(kw)
    return SystemParams(**base)


class TestSolve2x2:
    def test_low_risk_case(self):
        g = build_matrix_game(5.0, 0.1, 0.2, 0.05)
        eq = solve_2x2(g, 0.1, 0.2, 0.05)
        assert (eq.attack_prob, eq.protect_prob) == (0.0, 0.0)
        assert eq.value - g.offset == pytest.approx(0.0, abs=1e-15)
        assert eq.label is RiskLabel.S1

    def test_medium_risk_case(self):
        g = build_matrix_game(-2.0, 0.1, 0.2, 0.15)
        eq = solve_2x2(g, 0.1, 0.2, 0.15)
        assert (eq.attack_prob, eq.protect_prob) == (1.0, 0.0)
        assert eq.value - g.offset == pytest.approx(0.05, abs=1e-12)
        assert eq.label is RiskLabel.S2

    def test_high_risk_case_and_indifference(self):
        ca, cb, d = 0.1, 0.2, 0.5
        g = build_matrix_game(3.0, ca, cb, d)
        eq = solve_2x2(g, ca, cb, d)
        assert eq.attack_prob == pytest.approx(0.4, abs=1e-12)
        assert eq.protect_prob == pytest.approx(0.8, abs=1e-12)
        assert eq.value - g.offset == pytest.approx(0.16, abs=1e-12)
        assert eq.label is RiskLabel.S3
        # both players indifferent across their own pure actions
        def payoff(a, b):
            return g.offset + b * cb - a * ca + a * (1 - b) * d
        assert payoff(0.0, eq.protect_prob) == pytest.approx(eq.value, abs=1e-12)
        assert payoff(1.0, eq.protect_prob) == pytest.approx(eq.value, abs=1e-12)
        assert payoff(eq.attack_prob, 0.0) == pytest.approx(eq.value, abs=1e-12)
        assert payoff(eq.attack_prob, 1.0) == pytest.approx(eq.value, abs=1e-12)

    def test_threshold_equalities_use_half_open_intervals(self):
        ca, cb = 0.1, 0.2
        eq = solve_2x2(build_matrix_game(0.0, ca, cb, ca), ca, cb, ca)
        assert eq.label is RiskLabel.S1  # advantage == attack cost stays low risk
        eq = solve_2x2(build_matrix_game(0.0, ca, cb, cb), ca, cb, cb)
        assert eq.label is RiskLabel.S2  # advantage == protect cost stays medium
        eq = solve_2x2(build_matrix_game(0.0, ca, cb, 0.0), ca, cb, 0.0)
        assert eq.label is RiskLabel.S1 and eq.value == 0.0
        # with attacking costlier than protecting, the medium band is empty
        eq = solve_2x2(build_matrix_game(0.0, 0.3, 0.2, 0.25), 0.3, 0.2, 0.25)
        assert eq.label is RiskLabel.S1

    def test_malformed_game_rejected(self):
        g = build_matrix_game(1.0, 0.1, 0.2, 0.3)
        bad = np.array(g.entries)
        bad[1, 1] += 1e-6
        from jsqguard.security import MatrixGame2x2
        with pytest.raises(ValueError):
            solve_2x2(MatrixGame2x2(bad, g.offset), 0.1, 0.2, 0.3)

    @settings(max_examples=300)
    @given(st.floats(0.01, 2.0), st.floats(0.01, 2.0), st.floats(0.0, 3.0),
           st.floats(-5.0, 5.0))
    def test_matches_generic_solver(self, ca, cb, d, offset):
        game = build_matrix_game(offset, ca, cb, d)
        eq = solve_2x2(game, ca, cb, d)
        value, row1, col1, pure = solve_zero_sum_2x2(game.entries)
        assert eq.value == pytest.approx(value, abs=1e-12)
        if not pure:
            assert eq.attack_prob == pytest.approx(row1, abs=1e-12)
            assert eq.protect_prob == pytest.approx(col1, abs=1e-12)

    @settings(max_examples=200)
    @given(st.floats(0.01, 2.0), st.floats(0.01, 2.0), st.floats(1e-6, 3.0))
    def test_value_equals_gain_formula(self, ca, cb, d):
        game = build_matrix_game(0.0, ca, cb, d)
        eq = solve_2x2(game, ca, cb, d)
        expected = max(0.0, min(d - ca, cb - ca * cb / d))
        assert eq.value == pytest.approx(expected, abs=1e-12)
        assert game_value_gain(d, ca, cb) == pytest.approx(expected, abs=1e-12)


class TestDeltaSec:
    def test_norm_table_zero(self):
        p = game_params()
        g = Grid(n=2, bound=6)
        tab = successor_tables(g)
        table = ValueTable(g, tab.norm1.copy())
        d, valid = delta_sec_map(table, uniformize(p))
        assert np.max(np.abs(d[valid])) == 0.0

    def test_diagonal_exactly_zero_any_table(self):
        p = game_params()
        g = Grid(n=2, bound=6)
        rng = np.random.default_rng(3)
        table = ValueTable(g, rng.normal(size=g.size))
        uni = uniformize(p)
        for k in range(5):
            assert delta_sec(table, QueueState((k, k)), uni) == 0.0

    def test_boundary_raises(self):
        p = game_params()
        g = Grid(n=2, bound=4)
        table = ValueTable(g, np.zeros(g.size))
        with pytest.raises(BoundaryStateError):
            delta_sec(table, QueueState((1, 4)), uniformize(p))


class TestShapleyIteration:
    def test_fixed_point_residual(self):
        p = game_params()
        g = Grid(n=2, bound=2)
        rep = shapley_iteration(p, g, SolverConfig(epsilon=1e-10))
        assert rep.converged
        # one extra sweep moves nothing beyond tolerance
        from jsqguard.engine import kernels
        tab = successor_tables(g)
        uni = uniformize(p)
        V = rep.value.values.copy()
        resid = kernels.shapley_sweep_inplace(
            V, tab.down, tab.upmin, tab.upmax, tab.norm1,
            uni.lambda_tilde, uni.mu_tilde, p.attack_cost, p.protect_cost)
        assert resid < 1e-8

    def test_priced_out_attacker_matches_failure_free_mdp(self):
        p = game_params(attack_cost=1e6)
        g = Grid(n=2, bound=10)
        rep = shapley_iteration(p, g, SolverConfig(epsilon=1e-11))
        assert rep.converged
        assert np.all(rep.labels == int(RiskLabel.S1))
        assert np.all(rep.attack.probs == 0.0)
        assert np.all(rep.protect.probs == 0.0)
        mdp = value_iteration(game_params(fault_prob=0.0), g,
                              SolverConfig(epsilon=1e-11))
        assert np.max(np.abs(rep.value.values - mdp.value.values)) < 1e-8

    def test_fig_style_instance_has_low_and_high_risk(self):
        p = game_params()
        g = Grid(n=2, bound=30, boundary_margin=6)
        rep = shapley_iteration(p, g, SolverConfig(epsilon=1e-10))
        inner = interior_mask(g)
        present = set(int(v) for v in rep.labels[inner])
        assert int(RiskLabel.S1) in present
        assert int(RiskLabel.S3) in present
        # risk never falls when the longest queue grows, never rises when the
        # shortest one does: high-risk states are the imbalanced ones
        tab = successor_tables(g)
        idx = np.arange(g.size)
        lab = rep.labels.astype(int)
        up_l = tab.up[tab.argmax, idx]
        keep = inner & inner[up_l]
        assert np.all(lab[up_l[keep]] >= lab[keep])
        up_m = tab.up[tab.argmin, idx]
        keep = inner & inner[up_m] & ~tab.is_diagonal
        assert np.all(lab[up_m[keep]] <= lab[keep])

    def test_minimax_iteration_contracts(self):
        from jsqguard.model import contraction_factor
        p = game_params(lam=1.4, mu=1.4, gamma=1.1)
        g = Grid(n=2, bound=12)
        rep = shapley_iteration(p, g, SolverConfig(epsilon=1e-13,
                                                   update_scheme="synchronous"))
        res = rep.residuals
        kappa = contraction_factor(p)
        ratios = [res[i + 1] / res[i] for i in range(5, len(res) - 1)
                  if res[i] > 1e-3]
        assert max(ratios) <= kappa + 1e-9

    def test_mixed_strategies_follow_closed_form(self):
        p = game_params()
        g = Grid(n=2, bound=12)
        rep = shapley_iteration(p, g, SolverConfig(epsilon=1e-11))
        s3 = rep.labels == int(RiskLabel.S3)
        d = rep.delta[s3]
        assert np.allclose(rep.attack.probs[s3], p.protect_cost / d, atol=1e-12)
        assert np.allclose(rep.protect.probs[s3], 1.0 - p.attack_cost / d, atol=1e-12)


class TestEquilibriumAudit:
    def test_converged_instance_clean(self):
        p = game_params()
        g = Grid(n=2, bound=30, boundary_margin=6)
        rep = shapley_iteration(p, g, SolverConfig(epsilon=1e-12))
        assert equilibrium_audit(rep.value, rep.attack, rep.protect, p) == []

    def test_corrupted_mix_flagged(self):
        p = game_params()
        g = Grid(n=2, bound=30, boundary_margin=6)
        rep = shapley_iteration(p, g, SolverConfig(epsilon=1e-12))
        s3 = np.flatnonzero(rep.labels == int(RiskLabel.S3))
        assert s3.size > 0
        protect = rep.protect.probs.copy()
        protect[s3[0]] = 0.0  # defender abandons a high-risk state
        violations = equilibrium_audit(
            rep.value, rep.attack, ProtectPolicy(g, protect), p)
        assert any(v.kind == "attacker-gain" for v in violations)

    def test_negative_advantage_flagged(self):
        p = game_params()
        g = Grid(n=2, bound=8, boundary_margin=2)
        # a table decreasing in the longest queue makes the advantage negative
        tab = successor_tables(g)
        table = ValueTable(g, -2.0 * tab.xmax.astype(float))
        violations = equilibrium_audit(
            table, AttackStrategy.never(g), ProtectPolicy.never(g), p)
        assert any(v.kind == "negative-delta" for v in violations)

    def test_zero_table_vacuous(self):
        p = game_params()
        g = Grid(n=2, bound=8)
        zero = ValueTable(g, np.zeros(g.size))
        violations = equilibrium_audit(
            zero, AttackStrategy.never(g), ProtectPolicy.never(g), p)
        assert violations == []


class TestRegimeSweep:
    def test_regime_facts_small_lattice(self):
        p = SystemParams(n=2, lam=1.6, mu=1.0, gamma=1.0, protect_cost=0.2,
                         attack_cost=0.1)
        g = Grid(n=2, bound=10, boundary_margin=2)
        res = regime_sweep(p, g, SolverConfig(epsilon=1e-9),
                           ca_values=(0.05, 0.2, 3.0),
                           cb_values=(0.05, 0.2, 3.0))
        assert res.converged.all()
        assert res.consistency_violations == ()
        # priced-out attacker column
        assert all(r == "S1" for r in res.regimes[2, :])
        # no medium-risk class when attacking is costlier than defending
        for ia, ca in enumerate(res.ca_values):
            for ic, cb in enumerate(res.cb_values):
                if ca > cb:
                    assert "S2" not in res.regimes[ia, ic]
