import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from delayed_impulse.errors import DistinctItems, InadmissibleTrace, NonCommensurate
from delayed_impulse.fixtures import d1
from delayed_impulse.model import (RISK_SENSITIVE, ImpulseMenu, LinearLevelReward, MarkovLattice, StrategyTrace,
                                   TableReward, build_cumulative_lattice, build_time_grid, check_admissible,
                                   discount_weights, evaluate_controlled_payoff)


@pytest.mark.parametrize("T,delta,dt,N,d,X", [
    (1.0, 0.4, 0.1, 10, 4, 2),
    (1.0, 0.5, 0.5, 2, 1, 2),
    (1.0, 0.3, 0.1, 10, 3, 3),
])
def test_grid_integers(T, delta, dt, N, d, X):
    g = build_time_grid(T, delta, dt)
    assert (g.N, g.d, g.max_impulses) == (N, d, X)


def test_grid_rejects_misaligned_delay():
    with pytest.raises(NonCommensurate):
        build_time_grid(1.0, 0.33, 0.1)


def test_grid_needs_delay_below_horizon():
    with pytest.raises(ValueError):
        build_time_grid(1.0, 1.0, 0.1)


def test_lattice_single_item():
    lat = build_cumulative_lattice(ImpulseMenu([1.0], [0.0]), 2)
    assert sorted(lat.values[:, 0]) == [0.0, 1.0, 2.0]


def test_lattice_dedups_plus_minus():
    lat = build_cumulative_lattice(ImpulseMenu([1.0, -1.0], [0.0, 0.0]), 2)
    assert sorted(lat.values[:, 0]) == [-2.0, -1.0, 0.0, 1.0, 2.0]
    assert lat.root == 0 and lat.depth[lat.id_of([0.0])] == 0


def test_duplicate_items_rejected():
    with pytest.raises(DistinctItems):
        ImpulseMenu([0.5, 0.5], [0.1, 0.2])


@given(p=st.integers(1, 3), depth=st.integers(0, 4), seed=st.integers(0, 10_000))
def test_lattice_children_add_exactly(p, depth, seed):
    rng = np.random.default_rng(seed)
    items = rng.integers(-3, 4, size=(p, 2)).astype(float)
    if len({tuple(r) for r in items}) < p:
        return
    menu = ImpulseMenu(items, np.zeros(p))
    lat = build_cumulative_lattice(menu, depth)
    assert len(lat) <= sum(p ** k for k in range(depth + 1))
    for v in range(len(lat)):
        for j in range(p):
            c = lat.children[v, j]
            if lat.depth[v] < depth:
                assert c >= 0
                np.testing.assert_array_equal(lat.values[c], lat.values[v] + items[j])
            else:
                assert c == -1


@given(depth=st.integers(1, 4), picks=st.lists(st.integers(0, 1), min_size=0, max_size=4))
def test_lattice_holds_every_short_sum(depth, picks):
    menu = ImpulseMenu([[0.5], [-1.25]], [0, 0])
    lat = build_cumulative_lattice(menu, depth)
    picks = picks[:depth]
    total = sum((menu.items[j] for j in picks), np.zeros(1))
    lat.id_of(total)  # raises if missing


def _d1_path():
    model, menu = d1()
    return model, menu, np.zeros((model.grid.N + 1, 1))


def test_payoff_two_impulses_on_time():
    model, menu, path = _d1_path()
    J = evaluate_controlled_payoff(StrategyTrace((0, 4), (0, 0)), path, model.reward, model.grid, menu)
    assert J == pytest.approx(0.6, abs=1e-15)


def test_payoff_late_decision_is_free_and_useless():
    # second decision at T - delta: executes at T and is not charged
    model, menu, path = _d1_path()
    J = evaluate_controlled_payoff(StrategyTrace((0, 6), (0, 0)), path, model.reward, model.grid, menu)
    assert J == pytest.approx(0.5, abs=1e-15)


def test_payoff_zero_reward_no_impulse():
    g = build_time_grid(1.0, 0.4, 0.1)
    zero = LinearLevelReward([0.0])
    menu = ImpulseMenu([1.0], [0.1])
    path = np.zeros((g.N + 1, 1))
    assert evaluate_controlled_payoff(StrategyTrace((), ()), path, zero, g, menu) == 0.0
    assert evaluate_controlled_payoff(StrategyTrace((), ()), path, zero, g, menu, RISK_SENSITIVE) == 1.0


@given(decisions=st.lists(st.integers(0, 10), max_size=4, unique=True).map(sorted),
       costs=st.lists(st.floats(0, 5), min_size=2, max_size=2))
def test_zero_reward_payoff_is_minus_charged_costs(decisions, costs):
    g = build_time_grid(1.0, 0.3, 0.1)
    menu = ImpulseMenu([1.0, 2.0], costs)
    sizes = [k % 2 for k in range(len(decisions))]
    trace = StrategyTrace(decisions, sizes)
    path = np.zeros((g.N + 1, 1))
    try:
        check_admissible(trace, g, menu)
    except InadmissibleTrace:
        return
    J = evaluate_controlled_payoff(trace, path, LinearLevelReward([0.0]), g, menu)
    charged = sum(menu.costs[j] for t, j in zip(decisions, sizes) if t < g.N - g.d)
    assert J == -charged


@given(first=st.integers(0, 9), gap=st.integers(0, 10))
def test_admissibility_spacing(first, gap):
    g = build_time_grid(1.0, 0.3, 0.1)
    menu = ImpulseMenu([1.0], [0.0])
    second = first + gap
    trace = StrategyTrace((first, second), (0, 0))
    ok = second <= g.N and second >= min(g.N, first + g.d)
    if ok:
        check_admissible(trace, g, menu)
    else:
        with pytest.raises(InadmissibleTrace):
            check_admissible(trace, g, menu)


def test_kernel_rows_must_be_stochastic():
    g = build_time_grid(1.0, 0.5, 0.5)
    with pytest.raises(ValueError):
        MarkovLattice(g, [0.0, 1.0], [[0.5, 0.6], [0.5, 0.5]], LinearLevelReward([1.0]))


def test_reward_bound_enforced():
    g = build_time_grid(1.0, 0.5, 0.5)
    m = MarkovLattice(g, [0.0, 3.0], np.eye(2), LinearLevelReward([1.0]), gamma_bound=2.0)
    with pytest.raises(ValueError):
        m.reward_grid([0.0])


def test_table_reward_lookup():
    g = build_time_grid(1.0, 0.5, 0.5)
    menu = ImpulseMenu([1.0], [0.0])
    lat = build_cumulative_lattice(menu, 2)
    vals = np.arange(2 * 2 * 3, dtype=float).reshape(2, 2, 3)
    r = TableReward(vals, [[0.0], [10.0]], lat, g.dt)
    assert r(0.5, np.array([[11.0]]))[0] == vals[1, 1, 1]


def test_discount_weights_integrate_exactly():
    w = discount_weights(0.7, 0.25, 40)
    assert w.sum() == pytest.approx((1 - math.exp(-0.7 * 10)) / 0.7, rel=1e-14)
