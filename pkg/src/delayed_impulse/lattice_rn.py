"""Finite-horizon risk-neutral solver.

Level 0 is the value without impulses. Level ``n`` is the value when at most
``n`` impulses remain: a discrete Snell envelope of the running reward with
the obstacle

    O^n_i(a) = E[ sum_{j=i}^{i+d-1} g_j(a) dt
                  + 1{i < N-d} max_j ( -psi_j + Y^{n-1}_{i+d}(a + a_j) ) | s_i ]

where the max is taken pointwise in the state at the execution index
``i + d`` (the size is chosen when the impulse is executed).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import MissingChild, ObstacleViolation
from .evaluate import forward_value
from .model import (RISK_NEUTRAL, CumulativeLattice, ImpulseMenu, MarkovLattice, StrategyRule,
                    build_cumulative_lattice)

EPS_EQ = 1e-9


def eq_tol(Y):
    return EPS_EQ * (1.0 + np.abs(Y))


def window_value(kernels, step_reward, start, stop, terminal):
    """E[sum_{j=start}^{stop-1} step_reward[j] + terminal(stop) | s_start] by nested one-step expectations."""
    W = terminal
    for j in range(stop - 1, start - 1, -1):
        W = step_reward[j] + kernels[j] @ W
    return W


@dataclass
class RNSolveReport:
    model: MarkovLattice
    menu: ImpulseMenu
    lattice: CumulativeLattice
    levels: int
    Y: np.ndarray          # (levels+1, V, N+1, S), NaN where a is out of reach
    O: np.ndarray          # same shape; level 0 is NaN
    size_table: np.ndarray  # (levels+1, V, N+1, S) argmax menu index at execution, -1 if unused
    value: float
    level_values: np.ndarray
    rewards: np.ndarray
    rule: StrategyRule | None = None
    diagnostics: dict = field(default_factory=dict)
    mode: str = RISK_NEUTRAL


def compute_y0(model: MarkovLattice, lattice: CumulativeLattice, rewards=None) -> np.ndarray:
    """``(V, N+1, S)`` expected remaining reward without impulses."""
    if rewards is None:
        rewards = model.reward_tensor(lattice)
    N, dt = model.grid.N, model.grid.dt
    Y = np.zeros((len(lattice), N + 1, model.S))
    for a in range(len(lattice)):
        for i in range(N - 1, -1, -1):
            Y[a, i] = rewards[a, i] * dt + model.kernels[i] @ Y[a, i + 1]
    return Y


def compute_partial_reward(model: MarkovLattice, a, rewards_a=None) -> np.ndarray:
    """``(N+1, S)`` expected reward over the delay window ``[i, min(i+d, N))``."""
    grid = model.grid
    r = (model.reward_grid(a) if rewards_a is None else rewards_a) * grid.dt
    G = np.zeros((grid.N + 1, model.S))
    for i in range(grid.N + 1):
        G[i] = window_value(model.kernels, r, i, min(i + grid.d, grid.N), np.zeros(model.S))
    return G


def compute_obstacle(n: int, a: int, prev_Y: np.ndarray, model: MarkovLattice, menu: ImpulseMenu,
                     lattice: CumulativeLattice, rewards: np.ndarray):
    """Obstacle ``O^n(a)`` and the size argmax table at execution indices.

    ``prev_Y`` is the level ``n-1`` field ``(V, N+1, S)``. Returns ``(O, sizes)``
    with ``O`` of shape ``(N+1, S)`` and ``sizes`` of shape ``(N+1, S)``
    (entries below index ``d`` are -1).
    """
    grid = model.grid
    N, d = grid.N, grid.d
    kids = lattice.children[a]
    if np.any(kids < 0) or np.isnan(prev_Y[kids]).any():
        raise MissingChild(f"level {n - 1} is not available for every child of cumulative impulse {a}")
    r = rewards[a] * grid.dt
    # candidate[j, k, s] = -psi_j + Y^{n-1}_k(a + a_j, s)
    cand = prev_Y[kids] - menu.costs[:, None, None]
    sizes = np.full((N + 1, model.S), -1, dtype=np.int64)
    sizes[d:] = np.argmax(cand[:, d:], axis=0)
    best = np.max(cand, axis=0)
    O = np.empty((N + 1, model.S))
    zero = np.zeros(model.S)
    for i in range(N + 1):
        if i < N - d:
            O[i] = window_value(model.kernels, r, i, i + d, best[i + d])
        else:
            O[i] = window_value(model.kernels, r, i, N, zero)
    return O, sizes


def solve_level(obstacle: np.ndarray, model: MarkovLattice, rewards_a: np.ndarray) -> np.ndarray:
    """Discrete Snell envelope ``Y_i = max(O_i, g_i dt + P_i Y_{i+1})``, ``Y_N = 0``."""
    grid = model.grid
    N = grid.N
    Y = np.empty_like(obstacle)
    Y[N] = 0.0
    for i in range(N - 1, -1, -1):
        cont = rewards_a[i] * grid.dt + model.kernels[i] @ Y[i + 1]
        Y[i] = np.maximum(obstacle[i], cont)
    if np.any(Y < obstacle - eq_tol(Y)):
        raise ObstacleViolation("value fell below obstacle")
    return Y


def _active(lattice: CumulativeLattice, levels: int, n: int) -> np.ndarray:
    return np.flatnonzero(lattice.depth <= levels - n)


def solve(model: MarkovLattice, menu: ImpulseMenu, max_impulses: int | None = None) -> RNSolveReport:
    grid = model.grid
    L = grid.max_impulses if max_impulses is None else int(max_impulses)
    lattice = build_cumulative_lattice(menu, L)
    rewards = model.reward_tensor(lattice)
    V, N, S, d = len(lattice), grid.N, model.S, grid.d
    Y = np.full((L + 1, V, N + 1, S), np.nan)
    O = np.full_like(Y, np.nan)
    sizes = np.full(Y.shape, -1, dtype=np.int64)
    Y[0] = compute_y0(model, lattice, rewards)
    restriction = []
    for n in range(1, L + 1):
        for a in _active(lattice, L, n):
            O[n, a], sizes[n, a] = compute_obstacle(n, a, Y[n - 1], model, menu, lattice, rewards)
            Y[n, a] = solve_level(O[n, a], model, rewards[a])
        act = _active(lattice, L, n)
        gap = np.abs(Y[n, act, N - d:] - O[n, act, N - d:])
        restriction.append(float(gap.max()))
        if np.any(gap > eq_tol(Y[n, act, N - d:])):
            raise ObstacleViolation(f"level {n}: value and obstacle differ on the last delay window")
    level_values = np.array([model.initial @ Y[n, lattice.root, 0] for n in range(L + 1)])
    mono = [float(np.nanmax(Y[n - 1, _active(lattice, L, n)] - Y[n, _active(lattice, L, n)]))
            for n in range(1, L + 1)]
    report = RNSolveReport(model=model, menu=menu, lattice=lattice, levels=L, Y=Y, O=O, size_table=sizes,
                           value=float(level_values[L]), level_values=level_values, rewards=rewards,
                           diagnostics={"restriction_gap": restriction, "monotonicity_residual": mono})
    report.rule = extract_strategy(report)
    return report


def extract_strategy(report) -> StrategyRule:
    """Stop where the value meets its obstacle; execute the lowest-index argmax size.

    With ``m`` impulses remaining the rule reads level ``m`` fields. Decisions
    from index ``N - d`` on are inert and the evaluators skip them.
    """
    Y, O = report.Y, report.O
    with np.errstate(invalid="ignore"):
        stop = (Y - O) <= eq_tol(Y)
    stop &= ~np.isnan(O)
    stop[0] = False
    return StrategyRule(stop=stop, size=report.size_table.copy(), mode=report.mode,
                        meta={"levels": report.levels})


def evaluate_strategy_exact(rule: StrategyRule, model: MarkovLattice, menu: ImpulseMenu,
                            lattice: CumulativeLattice | None = None) -> float:
    if lattice is None:
        lattice = build_cumulative_lattice(menu, rule.levels)
    return forward_value(rule, model, menu, lattice, RISK_NEUTRAL)
