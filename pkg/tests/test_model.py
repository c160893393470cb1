import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from jsqguard.model import (
    Grid,
    QueueState,
    SystemParams,
    argmax_server,
    argmin_server,
    contraction_factor,
    enumerate_states,
    successor_down,
    successor_tables,
    successor_up,
    uniformize,
)


def test_successor_up_examples():
    g = Grid(n=2, bound=5)
    assert successor_up(QueueState((2, 0)), 2, g).lengths == (2, 1)
    assert successor_up(QueueState((5, 3)), 1, g).lengths == (5, 3)  # clamped
    assert successor_up(QueueState((0, 0)), 1, g).lengths == (1, 0)
    with pytest.raises(IndexError):
        successor_up(QueueState((0, 0)), 3, g)


def test_successor_down_examples():
    assert successor_down(QueueState((2, 0)), 2).lengths == (2, 0)
    assert successor_down(QueueState((2, 3)), 1).lengths == (1, 3)
    assert successor_down(QueueState((0, 0)), 1).lengths == (0, 0)
    with pytest.raises(IndexError):
        successor_down(QueueState((2, 0)), 0)


def test_argmin_argmax_examples():
    assert argmin_server(QueueState((2, 2))) == 1
    assert argmax_server(QueueState((2, 2))) == 1
    assert argmin_server(QueueState((3, 1, 5))) == 2
    assert argmax_server(QueueState((3, 1, 5))) == 3
    assert argmin_server(QueueState((0, 0, 0))) == 1


def test_uniformize_values():
    p = SystemParams(n=2, lam=1.0, mu=1.0, gamma=1.0, protect_cost=0.1)
    u = uniformize(p)
    assert u.scale == 4.0
    assert u.lambda_tilde == 0.25
    assert u.mu_tilde == 0.25

    p = SystemParams(n=2, lam=1.6, mu=1.0, gamma=0.1, protect_cost=0.1)
    u = uniformize(p)
    assert u.scale == pytest.approx(3.7)
    assert u.lambda_tilde == pytest.approx(0.43243, abs=1e-5)
    assert u.mu_tilde == pytest.approx(0.27027, abs=1e-5)


def test_uniformize_vanishing_discount_limit():
    p = SystemParams(n=2, lam=1.0, mu=1.0, gamma=1e-9, protect_cost=0.1)
    u = uniformize(p)
    total = u.lambda_tilde + p.n * u.mu_tilde
    assert total < 1.0
    assert total == pytest.approx(1.0, abs=1e-9)
    assert u.lambda_tilde == pytest.approx(1.0 / 3.0, abs=1e-9)


def test_grid_enumeration_count_and_order():
    g = Grid(n=3, bound=2)
    states = enumerate_states(g)
    assert states.shape == (27, 3)
    assert len({tuple(s) for s in states}) == 27
    # lexicographic, x1 slowest
    assert tuple(states[0]) == (0, 0, 0)
    assert tuple(states[1]) == (0, 0, 1)
    assert tuple(states[-1]) == (2, 2, 2)
    for k, s in enumerate(states):
        assert g.index_of(s) == k


def test_grid_margin_default_and_validation():
    assert Grid(n=2, bound=30).boundary_margin == 6
    assert Grid(n=2, bound=2).boundary_margin == 1
    with pytest.raises(ValueError):
        Grid(n=2, bound=5, boundary_margin=5)
    with pytest.raises(ValueError):
        Grid(n=2, bound=0)


def test_params_validation():
    with pytest.raises(ValueError):
        SystemParams(n=2, lam=1.0, mu=1.0, gamma=1.0, protect_cost=0.1,
                     routing_probs=(0.6, 0.6))
    with pytest.raises(ValueError):
        SystemParams(n=2, lam=0.0, mu=1.0, gamma=1.0, protect_cost=0.1)
    with pytest.raises(ValueError):
        SystemParams(n=2, lam=1.0, mu=1.0, gamma=1.0, protect_cost=0.1,
                     fault_prob=1.5)
    with pytest.raises(ValueError):
        QueueState((1, -1))
    p = SystemParams(n=3, lam=1.0, mu=1.0, gamma=1.0, protect_cost=0.1)
    assert p.routing_probs == (1.0 / 3.0,) * 3
    assert p.utilization == pytest.approx(1.0 / 3.0)


@given(
    st.lists(st.integers(min_value=0, max_value=7), min_size=1, max_size=4),
    st.integers(min_value=1, max_value=4),
    st.integers(min_value=8, max_value=12),
)
def test_up_down_inverse(lengths, server, bound):
    x = QueueState(tuple(lengths))
    g = Grid(n=x.n, bound=bound)
    i = 1 + (server - 1) % x.n
    up = successor_up(x, i, g)
    assert successor_down(up, i).lengths == x.lengths


@given(st.lists(st.integers(min_value=0, max_value=9), min_size=2, max_size=5),
       st.randoms(use_true_random=False))
def test_argmin_argmax_permutation_covariance(lengths, rnd):
    x = QueueState(tuple(lengths))
    perm = list(range(x.n))
    rnd.shuffle(perm)
    y = QueueState(tuple(x.lengths[p] for p in perm))
    # the relabelled winner holds the same queue-length value
    assert y.lengths[argmin_server(y) - 1] == x.lengths[argmin_server(x) - 1]
    assert y.lengths[argmax_server(y) - 1] == x.lengths[argmax_server(x) - 1]


@settings(max_examples=50)
@given(st.floats(0.1, 5.0), st.floats(0.1, 5.0), st.floats(0.01, 5.0),
       st.integers(1, 4))
def test_contraction_factor_below_one(lam, mu, gamma, n):
    p = SystemParams(n=n, lam=lam, mu=mu, gamma=gamma, protect_cost=0.1)
    u = uniformize(p)
    kappa = contraction_factor(p)
    assert 0.0 < kappa < 1.0
    assert u.lambda_tilde + n * u.mu_tilde == pytest.approx(kappa, abs=1e-15)


def test_successor_tables_consistency():
    g = Grid(n=2, bound=4)
    tab = successor_tables(g)
    states = enumerate_states(g)
    for s, x in enumerate(states):
        q = QueueState(tuple(x))
        for i in range(2):
            up = successor_up(q, i + 1, g)
            assert tab.up[i, s] == g.index_of(up.lengths)
            dn = successor_down(q, i + 1)
            assert tab.down[i, s] == g.index_of(dn.lengths)
        assert tab.upmin[s] == g.index_of(successor_up(q, argmin_server(q), g).lengths)
        assert tab.upmax[s] == g.index_of(successor_up(q, argmax_server(q), g).lengths)
        assert tab.norm1[s] == q.norm1
        assert tab.is_diagonal[s] == q.is_diagonal


def test_clamped_index_extension():
    g = Grid(n=2, bound=3)
    assert g.clamped_index_of((7, 2)) == g.index_of((3, 2))
    assert g.contains((3, 3))
    assert not g.contains((4, 0))
