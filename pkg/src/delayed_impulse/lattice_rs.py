"""Finite-horizon risk-sensitive solver (exponential utility).

Multiplicative analogue of :mod:`lattice_rn`:

    Y^0_i(a)  = e^{g_i dt} P_i Y^0_{i+1},   Y^0_N = 1
    O^n_i(a)  = E[ e^{sum_{j<i+d} g_j dt} max_j e^{-psi_j} Y^{n-1}_{i+d}(a + a_j) | s_i ],  i < N - d
              = Y^0_i(a),                                                                 i >= N - d
    Y^n_i(a)  = max(O^n_i, e^{g_i dt} P_i Y^n_{i+1}),  Y^n_N = 1

The window exponential is common to every menu item and positive, so it
factors out of the max. When exponents get large the same recursion runs on
logarithms (``log_space=True``); all comparisons are then made on logs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .errors import MissingChild, ObstacleViolation, OverflowRisk
from .evaluate import forward_value
from .lattice_rn import RNSolveReport, eq_tol
from .model import RISK_SENSITIVE, CumulativeLattice, ImpulseMenu, MarkovLattice, StrategyRule, build_cumulative_lattice

LOG_SPACE_THRESHOLD = 30.0
EXP_CAP = 700.0


@dataclass
class RSSolveReport(RNSolveReport):
    """Risk-sensitive report. In log space ``Y``/``O`` hold logarithms and
    ``value`` may be ``inf``; ``log_value`` is always finite."""

    log_space: bool = False
    log_value: float = 0.0
    theta: float = 1.0


def _log_expect(logP, logW):
    return logsumexp(logP + logW[None, :], axis=1)


def _log_kernels(model):
    with np.errstate(divide="ignore"):
        return np.log(model.kernels)


def _exponent_scale(model, menu, lattice, rewards, theta):
    return theta * (np.max(np.abs(rewards)) * model.grid.T + float(np.max(menu.costs)))


def rs_compute_y0(model: MarkovLattice, lattice: CumulativeLattice, rewards=None, *, theta: float = 1.0,
                  log_space: bool = False) -> np.ndarray:
    if rewards is None:
        rewards = model.reward_tensor(lattice)
    grid = model.grid
    N = grid.N
    x = theta * rewards * grid.dt
    if not log_space and np.max(x.sum(axis=1)) > EXP_CAP:
        raise OverflowRisk("exp argument exceeds the cap; solve in log space")
    Y = np.empty((len(lattice), N + 1, model.S))
    if log_space:
        logP = _log_kernels(model)
        Y[:, N] = 0.0
        for a in range(len(lattice)):
            for i in range(N - 1, -1, -1):
                Y[a, i] = x[a, i] + _log_expect(logP[i], Y[a, i + 1])
    else:
        Y[:, N] = 1.0
        for a in range(len(lattice)):
            for i in range(N - 1, -1, -1):
                Y[a, i] = np.exp(x[a, i]) * (model.kernels[i] @ Y[a, i + 1])
    return Y


def _window(model, x_a, start, stop, terminal, log_space, logP=None):
    W = terminal
    for j in range(stop - 1, start - 1, -1):
        if log_space:
            W = x_a[j] + _log_expect(logP[j], W)
        else:
            W = np.exp(x_a[j]) * (model.kernels[j] @ W)
    return W


def rs_compute_obstacle(n: int, a: int, prev_Y: np.ndarray, model: MarkovLattice, menu: ImpulseMenu,
                        lattice: CumulativeLattice, rewards: np.ndarray, *, theta: float = 1.0,
                        log_space: bool = False, logP=None):
    grid = model.grid
    N, d = grid.N, grid.d
    kids = lattice.children[a]
    if np.any(kids < 0) or np.isnan(prev_Y[kids]).any():
        raise MissingChild(f"level {n - 1} is not available for every child of cumulative impulse {a}")
    x_a = theta * rewards[a] * grid.dt
    if log_space:
        if logP is None:
            logP = _log_kernels(model)
        cand = prev_Y[kids] - theta * menu.costs[:, None, None]
        one = np.zeros(model.S)
    else:
        cand = prev_Y[kids] * np.exp(-theta * menu.costs)[:, None, None]
        one = np.ones(model.S)
    sizes = np.full((N + 1, model.S), -1, dtype=np.int64)
    sizes[d:] = np.argmax(cand[:, d:], axis=0)
    best = np.max(cand, axis=0)
    O = np.empty((N + 1, model.S))
    for i in range(N + 1):
        if i < N - d:
            O[i] = _window(model, x_a, i, i + d, best[i + d], log_space, logP)
        else:
            O[i] = _window(model, x_a, i, N, one, log_space, logP)
    return O, sizes


def rs_solve_level(obstacle: np.ndarray, model: MarkovLattice, rewards_a: np.ndarray, *, theta: float = 1.0,
                   log_space: bool = False, logP=None) -> np.ndarray:
    grid = model.grid
    N = grid.N
    x_a = theta * rewards_a * grid.dt
    Y = np.empty_like(obstacle)
    Y[N] = 0.0 if log_space else 1.0
    for i in range(N - 1, -1, -1):
        if log_space:
            cont = x_a[i] + _log_expect(logP[i], Y[i + 1])
        else:
            cont = np.exp(x_a[i]) * (model.kernels[i] @ Y[i + 1])
        Y[i] = np.maximum(obstacle[i], cont)
    if np.any(Y < obstacle - eq_tol(Y)):
        raise ObstacleViolation("value fell below obstacle")
    return Y


def rs_solve(model: MarkovLattice, menu: ImpulseMenu, max_impulses: int | None = None, *,
             theta: float = 1.0, log_space: bool | None = None) -> RSSolveReport:
    if theta <= 0:
        raise ValueError("only a positive risk parameter theta is supported")
    grid = model.grid
    L = grid.max_impulses if max_impulses is None else int(max_impulses)
    lattice = build_cumulative_lattice(menu, L)
    rewards = model.reward_tensor(lattice)
    if log_space is None:
        log_space = _exponent_scale(model, menu, lattice, rewards, theta) > LOG_SPACE_THRESHOLD
    logP = _log_kernels(model) if log_space else None
    V, N, S, d = len(lattice), grid.N, model.S, grid.d
    Y = np.full((L + 1, V, N + 1, S), np.nan)
    O = np.full_like(Y, np.nan)
    sizes = np.full(Y.shape, -1, dtype=np.int64)
    Y[0] = rs_compute_y0(model, lattice, rewards, theta=theta, log_space=log_space)
    restriction = []
    for n in range(1, L + 1):
        act = np.flatnonzero(lattice.depth <= L - n)
        for a in act:
            O[n, a], sizes[n, a] = rs_compute_obstacle(n, a, Y[n - 1], model, menu, lattice, rewards,
                                                       theta=theta, log_space=log_space, logP=logP)
            Y[n, a] = rs_solve_level(O[n, a], model, rewards[a], theta=theta, log_space=log_space, logP=logP)
        gap = np.abs(Y[n, act, N - d:] - O[n, act, N - d:])
        restriction.append(float(gap.max()))
        if np.any(gap > eq_tol(Y[n, act, N - d:])):
            raise ObstacleViolation(f"level {n}: value and obstacle differ on the last delay window")
    if not log_space and np.nanmin(Y) <= 0:
        raise ObstacleViolation("risk-sensitive values must stay positive")
    if log_space:
        level_logs = np.array([logsumexp(Y[n, 0, 0], b=model.initial) for n in range(L + 1)])
    else:
        level_logs = np.log([model.initial @ Y[n, 0, 0] for n in range(L + 1)])
    with np.errstate(over="ignore"):
        level_values = np.exp(level_logs)
    report = RSSolveReport(model=model, menu=menu, lattice=lattice, levels=L, Y=Y, O=O, size_table=sizes,
                           value=float(level_values[L]), level_values=level_values, rewards=rewards,
                           diagnostics={"restriction_gap": restriction}, mode=RISK_SENSITIVE,
                           log_space=log_space, log_value=float(level_logs[L]), theta=theta)
    report.rule = rs_extract_strategy(report)
    return report


def rs_extract_strategy(report: RSSolveReport) -> StrategyRule:
    """Same hitting/argmax construction as the risk-neutral rule, on the
    multiplicative fields (log or linear, both order-preserving)."""
    Y, O = report.Y, report.O
    with np.errstate(invalid="ignore"):
        stop = (Y - O) <= eq_tol(Y)
    stop &= ~np.isnan(O)
    stop[0] = False
    return StrategyRule(stop=stop, size=report.size_table.copy(), mode=RISK_SENSITIVE,
                        meta={"levels": report.levels, "log_space": report.log_space, "theta": report.theta})


def rs_evaluate_strategy_exact(rule: StrategyRule, model: MarkovLattice, menu: ImpulseMenu,
                               lattice: CumulativeLattice | None = None, *, theta: float = 1.0,
                               log: bool = False) -> float:
    """E[exp(theta * (sum g dt - sum charged psi))] under ``rule`` (its log if ``log``)."""
    if lattice is None:
        lattice = build_cumulative_lattice(menu, rule.levels)
    lv = forward_value(rule, model, menu, lattice, RISK_SENSITIVE, theta=theta)
    return lv if log else math.exp(lv)
