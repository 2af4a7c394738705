import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from delayed_impulse.errors import OverflowRisk
from delayed_impulse.fixtures import d1, r3
from delayed_impulse.lattice_rn import solve
from delayed_impulse.lattice_rs import rs_compute_obstacle, rs_compute_y0, rs_evaluate_strategy_exact, rs_solve
from delayed_impulse.model import ImpulseMenu, LinearLevelReward, MarkovLattice, build_cumulative_lattice, build_time_grid

R3_RS_ORACLE = 1.743741849269739  # brute-force tree, frozen


def test_y0_d1_is_exp_of_remaining_level():
    model, menu = d1()
    lat = build_cumulative_lattice(menu, 2)
    Y0 = rs_compute_y0(model, lat)
    assert Y0[lat.id_of([1.0]), 0, 0] == pytest.approx(math.e, rel=1e-15)
    assert np.all(Y0[:, model.grid.N] == 1.0)


def test_obstacle_d1():
    model, menu = d1()
    lat = build_cumulative_lattice(menu, 2)
    rew = model.reward_tensor(lat)
    O, _ = rs_compute_obstacle(1, 0, rs_compute_y0(model, lat, rew), model, menu, lat, rew)
    assert O[0, 0] == pytest.approx(math.exp(0.5), rel=1e-15)


def test_d1_value_and_same_decisions_as_rn():
    model, menu = d1()
    rs, rn = rs_solve(model, menu), solve(model, menu)
    assert rs.value == pytest.approx(math.exp(0.6), abs=1e-12)
    assert np.array_equal(rs.rule.stop, rn.rule.stop)
    assert np.array_equal(rs.rule.size, rn.rule.size)


def test_r3_against_frozen_oracle_and_reevaluation():
    model, menu = r3()
    rep = rs_solve(model, menu)
    assert rep.value == pytest.approx(R3_RS_ORACLE, rel=1e-10)
    assert rs_evaluate_strategy_exact(rep.rule, model, menu) == pytest.approx(rep.value, rel=1e-10)


def test_log_space_agrees_with_direct():
    model, menu = r3()
    a, b = rs_solve(model, menu, log_space=False), rs_solve(model, menu, log_space=True)
    assert b.log_space and not a.log_space
    assert b.log_value == pytest.approx(math.log(a.value), abs=1e-12)
    assert np.array_equal(a.rule.stop, b.rule.stop)


def test_large_rewards_switch_to_logs():
    g = build_time_grid(1.0, 0.25, 0.125)
    model = MarkovLattice(g, [0.0, 200.0], [[0.5, 0.5], [0.5, 0.5]], LinearLevelReward([5.0]))
    menu = ImpulseMenu([100.0], [1.0])
    rep = rs_solve(model, menu)
    assert rep.log_space and math.isfinite(rep.log_value)
    lv = rs_evaluate_strategy_exact(rep.rule, model, menu, log=True)
    assert lv == pytest.approx(rep.log_value, rel=1e-12)
    with pytest.raises(OverflowRisk):
        rs_solve(model, menu, log_space=False)


def test_huge_costs_give_uncontrolled_value():
    model, menu = r3()
    rep = rs_solve(model, ImpulseMenu(menu.items, [1e4, 1e4]))
    assert rep.value == pytest.approx(rep.level_values[0], rel=1e-14)


def test_negative_theta_rejected():
    model, menu = d1()
    with pytest.raises(ValueError):
        rs_solve(model, menu, theta=-1.0)


@given(seed=st.integers(0, 10_000), theta=st.floats(0.2, 2.0))
def test_positive_and_bounded(seed, theta):
    model, menu = r3(seed)
    rep = rs_solve(model, menu, theta=theta)
    Y = rep.Y[~np.isnan(rep.Y)]
    assert np.all(Y > 0)
    # bound with |g| replaced by its declared bound, deterministic here
    gam = model.gamma_bound
    N = model.grid.N
    bound = np.exp(theta * gam * (N - np.arange(N + 1)) * model.grid.dt)
    for n in range(rep.levels + 1):
        for a in np.flatnonzero(rep.lattice.depth <= rep.levels - n):
            assert np.all(rep.Y[n, a] <= bound[:, None] * (1 + 1e-12))
            assert np.all(rep.Y[n, a] >= rep.Y[0, a] * (1 - 1e-12))
    assert np.all(rep.Y[:, :, N][~np.isnan(rep.Y[:, :, N])] == 1.0)


@given(cost=st.floats(0.0, 1.0), level=st.floats(-1.0, 2.0))
def test_deterministic_rs_is_exp_of_rn(cost, level):
    g = build_time_grid(1.0, 0.25, 0.125)
    model = MarkovLattice(g, [level], [[1.0]], LinearLevelReward([1.0]))
    menu = ImpulseMenu([0.5, -0.5], [cost, cost / 2])
    assert rs_solve(model, menu).value == pytest.approx(math.exp(solve(model, menu).value), rel=1e-12)


def test_log_space_swing_identity_is_relative():
    # values near 1e6: agreement is checked at float resolution, not absolutely
    from delayed_impulse.swing import build_swing
    from delayed_impulse.verify import SWING_ACCEPTANCE

    model, menu = build_swing(SWING_ACCEPTANCE)
    rep = rs_solve(model, menu, SWING_ACCEPTANCE.rights)
    assert rep.log_space
    assert np.all(rep.Y[:, :, model.grid.N][~np.isnan(rep.Y[:, :, model.grid.N])] == 0.0)
    J = rs_evaluate_strategy_exact(rep.rule, model, menu, rep.lattice)
    assert J == pytest.approx(rep.value, rel=1e-12)
