"""Exact forward evaluation of a lattice strategy rule.

The evaluator pushes probability mass forward over (impulses remaining,
cumulative impulse id, state) with an explicit queue of pending executions.
It never reads value fields: only the rule's stop/size tables, so that
agreement with a solver's value is an independent check.
"""
from __future__ import annotations

import math

import numpy as np

from .errors import InadmissibleRule
from .model import (DISCOUNTED, RISK_NEUTRAL, RISK_SENSITIVE, CumulativeLattice, ImpulseMenu,
                    MarkovLattice, StrategyRule, discount_weights)


def forward_value(rule: StrategyRule, model: MarkovLattice, menu: ImpulseMenu, lattice: CumulativeLattice,
                  mode: str = RISK_NEUTRAL, *, theta: float = 1.0, rate: float | None = None,
                  rewards: np.ndarray | None = None) -> float:
    """Expected payoff of ``rule``.

    Risk-neutral and discounted modes return the expectation itself; the
    risk-sensitive mode returns ``log E[exp(theta * payoff)]`` so callers can
    exponentiate only when it is safe.
    """
    grid = model.grid
    N, d, S = grid.N, grid.d, model.S
    V = len(lattice)
    rule.validate(grid, lattice, S, menu)
    if mode == DISCOUNTED and (rate is None or rate <= 0):
        raise ValueError("discounted evaluation needs a positive rate")
    if rewards is None:
        rewards = model.reward_tensor(lattice)
    stationary = rule.stationary
    L = rule.stop.shape[0]
    top = 0 if stationary else L - 1

    if mode == RISK_SENSITIVE:
        costs = theta * menu.costs
        step = np.exp(theta * rewards * grid.dt)
    elif mode == DISCOUNTED:
        costs = menu.costs
        step = rewards * discount_weights(rate, grid.dt, N)[None, :, None]
    else:
        costs = menu.costs
        step = rewards * grid.dt
    cheapest = int(np.argmin(costs))

    free = np.zeros((L, V, S))
    free[top, lattice.root] = model.initial
    pend = np.zeros((L, V, d, S))
    inert = np.zeros((V, S))
    total = 0.0
    log_scale = 0.0
    s_idx = np.broadcast_to(np.arange(S), (V, S))
    a_idx = np.broadcast_to(np.arange(V)[:, None], (V, S))

    for i in range(N + 1):
        due = pend[:, :, 0, :].copy()
        pend[:, :, :-1] = pend[:, :, 1:]
        pend[:, :, -1] = 0.0
        for m in range(L):
            X = due[m]
            if not X.any():
                continue
            j = rule.size_at(m, slice(None), i, slice(None))
            child = lattice.children[a_idx, j]
            live = X > 0
            if np.any(child[live] < 0):
                raise InadmissibleRule("an execution leaves the cumulative lattice")
            c = costs[j]
            if mode == RISK_SENSITIVE:
                X = X * np.exp(-c)
            elif mode == DISCOUNTED:
                total -= math.exp(-rate * grid.time(i)) * float(np.sum(X * c))
            else:
                total -= float(np.sum(X * c))
            nxt = m if stationary else m - 1
            np.add.at(free[nxt], (np.where(live, child, 0), s_idx), np.where(live, X, 0.0))
        if i == N:
            break

        levels = range(L) if stationary else range(1, L)
        for m in levels:
            D = free[m] * rule.stop[m, :, i, :]
            if not D.any():
                continue
            if mode == DISCOUNTED and i + d > N:
                total -= math.exp(-rate * (grid.time(i) + grid.delta)) * costs[cheapest] * float(D.sum())
                inert += D
                free[m] -= D
            elif mode != DISCOUNTED and i >= N - d:
                continue
            else:
                pend[m, :, d - 1, :] += D
                free[m] -= D

        g = step[:, i, :]
        if mode == RISK_SENSITIVE:
            free *= g
            pend *= g[None, :, None, :]
            inert *= g
        else:
            total += float(np.sum(free.sum(axis=0) * g) + np.sum(pend.sum(axis=(0, 2)) * g) + np.sum(inert * g))

        P = model.kernels[i]
        free = free @ P
        pend = pend @ P
        inert = inert @ P

        if mode == RISK_SENSITIVE:
            scale = max(free.max(), pend.max() if pend.size else 0.0, inert.max())
            if scale > 0:
                free /= scale
                pend /= scale
                inert /= scale
                log_scale += math.log(scale)

    if mode == RISK_SENSITIVE:
        return log_scale + math.log(free.sum() + pend.sum() + inert.sum())
    return total
