"""Independent ground truth for small instances.

``brute_force_tree_value`` runs dynamic programming on the full history tree
(no recombination of paths) with an explicit controller state: cumulative
impulse, number of impulses used, and a countdown to the pending execution.
The size of a pending impulse is maximized when the countdown expires, using
the realized state at that moment. None of this shares code with the
obstacle-based solvers.
"""
from __future__ import annotations

import itertools

import numpy as np

from .model import (DISCOUNTED, RISK_NEUTRAL, RISK_SENSITIVE, ImpulseMenu, MarkovLattice, StrategyRule,
                    StrategyTrace, TimeGrid, build_cumulative_lattice, evaluate_controlled_payoff)
from .errors import TooLarge

MAX_HISTORIES = 1_000_000


def brute_force_tree_value(model: MarkovLattice, menu: ImpulseMenu, mode: str = RISK_NEUTRAL,
                           max_impulses: int | None = None, *, theta: float = 1.0) -> float:
    grid = model.grid
    N, d, S = grid.N, grid.d, model.S
    if S ** N > MAX_HISTORIES:
        raise TooLarge(f"{S}^{N} histories exceed {MAX_HISTORIES}")
    cap = grid.max_impulses if max_impulses is None else int(max_impulses)
    lat = build_cumulative_lattice(menu, cap)
    V = len(lat)
    rewards = model.reward_tensor(lat)  # (V, N, S)
    mult = mode == RISK_SENSITIVE
    if mode not in (RISK_NEUTRAL, RISK_SENSITIVE):
        raise ValueError(f"unsupported mode {mode!r}")
    bad = 0.0 if mult else -np.inf

    # exec_table[m, a, j]: child id for impulse j from a with m used (or -1)
    kids = np.where(np.arange(cap + 1)[:, None, None] < cap, lat.children[None], -1)
    if mult:
        item_gain = np.exp(-theta * menu.costs)
    else:
        item_gain = -menu.costs

    terminal = 1.0 if mult else 0.0
    free_next = None  # (nodes, cap+1, V) at level i+1; None means constant terminal
    pend_next = None  # (nodes, cap+1, V, d): index k -> execution k steps later
    for i in range(N - 1, -1, -1):
        nodes = S ** (i + 1)
        last = np.arange(nodes) % S
        P = model.kernels[i][last]  # (nodes, S)
        if free_next is None:
            E_free = np.full((nodes, cap + 1, V), terminal)
            E_pend = np.full((nodes, cap + 1, V, d), terminal)
        else:
            E_free = np.einsum("ns,ns...->n...", P, free_next.reshape(nodes, S, cap + 1, V))
            E_pend = np.einsum("ns,ns...->n...", P, pend_next.reshape(nodes, S, cap + 1, V, d))
        g = rewards[:, i, :][:, last].T  # (nodes, V)
        if mult:
            w = np.exp(theta * g * grid.dt)[:, None, :]
            cont = w * E_free
            decide = w * E_pend[..., d - 1]
        else:
            r = (g * grid.dt)[:, None, :]
            cont = r + E_free
            decide = r + E_pend[..., d - 1]
        free = cont
        if i < N - d:
            allowed = np.arange(cap + 1) < cap
            free = np.where(allowed[None, :, None], np.maximum(cont, decide), cont)
        pend = np.empty((nodes, cap + 1, V, d))
        if d > 1:
            if mult:
                pend[..., 1:] = w[..., None] * E_pend[..., :-1]
            else:
                pend[..., 1:] = r[..., None] + E_pend[..., :-1]
        # execution now: best size given the realized state
        best = np.full((nodes, cap + 1, V), bad)
        for m in range(cap):
            for a in range(V):
                for j in range(menu.p):
                    c = kids[m, a, j]
                    if c < 0:
                        continue
                    if mult:
                        val = item_gain[j] * free[:, m + 1, c]
                    else:
                        val = item_gain[j] + free[:, m + 1, c]
                    best[:, m, a] = np.maximum(best[:, m, a], val)
        pend[..., 0] = best
        free_next, pend_next = free, pend

    root = free_next[:, 0, lat.root]  # one entry per initial state
    return float(model.initial @ root)


def enumerate_deterministic(model: MarkovLattice, menu: ImpulseMenu, max_impulses: int | None = None,
                            mode: str = RISK_NEUTRAL, *, rate: float | None = None, theta: float = 1.0):
    """Exhaustive search over decision indices and sizes for a single-state model.

    Returns ``(value, schedule)`` where ``schedule`` lists ``(decision time,
    item vector)`` pairs. Only decisions that can still matter are enumerated
    (before ``N - d`` in finite horizon, before ``N`` when discounting).
    """
    if model.S != 1:
        raise ValueError("deterministic enumeration needs a single-state model")
    grid = model.grid
    path = np.repeat(model.states, grid.N + 1, axis=0)
    last = grid.N - grid.d if rate is None else grid.N
    cap = (grid.max_impulses if rate is None else grid.N) if max_impulses is None else max_impulses
    pmode = DISCOUNTED if rate is not None else mode
    best_val, best_trace = -np.inf, StrategyTrace((), ())
    for times in admissible_decision_sets(grid, last, cap):
        for sizes in itertools.product(range(menu.p), repeat=len(times)):
            tr = StrategyTrace(times, sizes)
            v = evaluate_controlled_payoff(tr, path, model.reward, grid, menu, pmode, theta=theta, rate=rate)
            if v > best_val + 1e-15:
                best_val, best_trace = v, tr
    schedule = [(grid.time(t), menu.items[j].copy()) for t, j in zip(best_trace.decisions, best_trace.sizes)]
    return float(best_val), schedule


def admissible_decision_sets(grid: TimeGrid, last: int, cap: int):
    """All increasing decision index tuples below ``last`` with spacing ``d``."""

    def rec(start, left):
        yield ()
        if left == 0:
            return
        for t in range(start, last):
            for rest in rec(t + grid.d, left - 1):
                yield (t,) + rest

    yield from rec(0, cap)


def max_admissible_impulses(grid: TimeGrid) -> int:
    """Largest number of impulses executed by the horizon (``tau + delta <= T``)
    over every admissible decision sequence on the grid, by enumeration."""
    best = 0
    for times in admissible_decision_sets(grid, grid.N + 1, grid.N + 1):
        best = max(best, sum(t + grid.d <= grid.N for t in times))
    return best


def random_admissible_strategy(grid: TimeGrid, menu: ImpulseMenu, levels: int, S: int, seed, *,
                               stationary: bool = False, mode: str = RISK_NEUTRAL,
                               lattice=None, stop_probability: float | None = None) -> StrategyRule:
    """Random feedback rule: per (level, impulse) a random threshold decides
    stopping at each node; sizes are uniform over the menu. Spacing is
    enforced by the execution semantics, so every sampled rule is admissible."""
    rng = np.random.default_rng(seed)
    if lattice is None:
        lattice = build_cumulative_lattice(menu, levels)
    L = 1 if stationary else levels + 1
    shape = (L, len(lattice), grid.N + 1, S)
    if stop_probability is None:
        q = rng.uniform(0.0, 1.0, size=(L, len(lattice), 1, 1)) ** 2
    else:
        q = np.full((L, len(lattice), 1, 1), stop_probability)
    stop = rng.uniform(size=shape) < q
    if not stationary:
        stop[0] = False
    size = rng.integers(0, menu.p, size=shape)
    return StrategyRule(stop=stop, size=size, stationary=stationary, mode=mode, meta={"seed": seed})
