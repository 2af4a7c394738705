"""Domain types shared by every solver: time grid, impulse menu, cumulative
impulse lattice, finite-state Markov model, strategy traces and rules.

Time is discretized on a uniform grid ``t_i = i * dt`` (``i = 0..N``). A
decision taken at index ``i`` is executed at ``i + d`` where ``d * dt`` is the
execution delay. Running rewards are left-endpoint sums ``g(t_i, .) * dt``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import DistinctItems, InadmissibleRule, InadmissibleTrace, NonCommensurate

RISK_NEUTRAL = "risk-neutral"
RISK_SENSITIVE = "risk-sensitive"
DISCOUNTED = "discounted"

_GRID_TOL = 1e-9
_KEY_DECIMALS = 10

Reward = Callable[[float, np.ndarray], np.ndarray]


def _integer_ratio(num: float, den: float, what: str) -> int:
    q = num / den
    k = int(round(q))
    if abs(q - k) > _GRID_TOL:
        raise NonCommensurate(f"{what}={num!r} is not an integer multiple of dt={den!r}; adjust dt")
    return k


@dataclass(frozen=True)
class TimeGrid:
    T: float
    delta: float
    dt: float
    N: int
    d: int

    def __post_init__(self):
        if self.N < 1 or not 1 <= self.d < self.N:
            raise ValueError(f"need N >= 1 and 1 <= d < N, got N={self.N}, d={self.d}")

    @property
    def max_impulses(self) -> int:
        """floor(T / delta), computed on the integer grid."""
        return self.N // self.d

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.N + 1) * self.dt

    def time(self, i: int) -> float:
        return i * self.dt


def build_time_grid(T: float, delta: float, dt: float) -> TimeGrid:
    if not (T > delta > 0):
        raise ValueError(f"need T > delta > 0, got T={T}, delta={delta}")
    if dt <= 0:
        raise ValueError("dt must be positive")
    N = _integer_ratio(T, dt, "T")
    d = _integer_ratio(delta, dt, "delta")
    return TimeGrid(T=float(T), delta=float(delta), dt=float(dt), N=N, d=d)


def _key(v: np.ndarray) -> tuple:
    return tuple(np.round(np.asarray(v, dtype=float), _KEY_DECIMALS) + 0.0)


class ImpulseMenu:
    """Ordered finite set of impulse sizes with their costs.

    The order of ``items`` is the tie-breaking order everywhere: when several
    sizes attain the same value the lowest index wins.
    """

    def __init__(self, items, costs):
        items = np.asarray(items, dtype=float)
        if items.ndim == 1:
            items = items[:, None]
        costs = np.asarray(costs, dtype=float).reshape(-1)
        if items.ndim != 2 or items.shape[0] < 1:
            raise ValueError("menu needs at least one item")
        if costs.shape[0] != items.shape[0]:
            raise ValueError("one cost per menu item is required")
        if np.any(costs < 0) or not np.all(np.isfinite(costs)):
            raise ValueError("impulse costs must be finite and nonnegative")
        keys = [_key(x) for x in items]
        if len(set(keys)) != len(keys):
            raise DistinctItems("menu items must be pairwise distinct")
        self.items = items
        self.costs = costs
        self.items.setflags(write=False)
        self.costs.setflags(write=False)

    @property
    def dim(self) -> int:
        return self.items.shape[1]

    @property
    def p(self) -> int:
        return self.items.shape[0]

    def __len__(self):
        return self.p

    def __repr__(self):
        return f"ImpulseMenu(items={self.items.tolist()}, costs={self.costs.tolist()})"


@dataclass(frozen=True)
class CumulativeLattice:
    """All distinct sums of at most ``max_depth`` menu items.

    ``children[v, j]`` is the id of ``values[v] + items[j]`` or -1 when that
    sum needs more than ``max_depth`` impulses from ``v``'s minimal depth.
    """

    values: np.ndarray
    depth: np.ndarray
    children: np.ndarray
    index: dict
    max_depth: int

    def __len__(self):
        return self.values.shape[0]

    def id_of(self, a) -> int:
        return self.index[_key(a)]

    @property
    def root(self) -> int:
        return 0


def build_cumulative_lattice(menu: ImpulseMenu, max_depth: int, max_size: int = 2_000_000) -> CumulativeLattice:
    if max_depth < 0:
        raise ValueError("max_depth must be nonnegative")
    zero = np.zeros(menu.dim)
    values = [zero]
    depth = [0]
    index = {_key(zero): 0}
    frontier = [0]
    for k in range(1, max_depth + 1):
        nxt = []
        for v in frontier:
            for item in menu.items:
                s = values[v] + item
                key = _key(s)
                if key not in index:
                    index[key] = len(values)
                    values.append(s)
                    depth.append(k)
                    nxt.append(index[key])
                    if len(values) > max_size:
                        raise ValueError("cumulative lattice too large; coarsen the menu or lower the depth")
        frontier = nxt
    V = len(values)
    children = np.full((V, menu.p), -1, dtype=np.int64)
    for v in range(V):
        if depth[v] >= max_depth:
            continue
        for j, item in enumerate(menu.items):
            children[v, j] = index[_key(values[v] + item)]
    vals = np.array(values)
    dep = np.array(depth, dtype=np.int64)
    for arr in (vals, dep, children):
        arr.setflags(write=False)
    return CumulativeLattice(values=vals, depth=dep, children=children, index=index, max_depth=max_depth)


class LinearLevelReward:
    """g(t, x) = c . x"""

    def __init__(self, coef):
        self.coef = np.atleast_1d(np.asarray(coef, dtype=float))

    def __call__(self, t, x):
        return np.asarray(x, dtype=float) @ self.coef


class TableReward:
    """Reward given explicitly as ``values[i][s][a_id]``.

    Evaluation at a point ``x`` looks up the unique (s, a) pair with
    ``states[s] + lattice.values[a] == x``; ambiguous tables are rejected.
    """

    def __init__(self, values, states, lattice: CumulativeLattice, dt: float):
        self.values = np.asarray(values, dtype=float)
        self.dt = dt
        states = np.asarray(states, dtype=float)
        N, S, V = self.values.shape
        if S != states.shape[0] or V != len(lattice):
            raise ValueError(f"table shape {self.values.shape} does not match S={states.shape[0]}, V={len(lattice)}")
        self._lookup = {}
        for s in range(S):
            for a in range(V):
                key = _key(states[s] + lattice.values[a])
                prev = self._lookup.get(key)
                if prev is not None and not np.array_equal(self.values[:, prev[0], prev[1]], self.values[:, s, a]):
                    raise ValueError("table reward is ambiguous: two (state, impulse) pairs share a point")
                self._lookup[key] = (s, a)

    def __call__(self, t, x):
        i = min(int(round(t / self.dt)), self.values.shape[0] - 1)
        x = np.asarray(x, dtype=float)
        flat = x.reshape(-1, x.shape[-1])
        out = np.empty(flat.shape[0])
        for k, row in enumerate(flat):
            s, a = self._lookup[_key(row)]
            out[k] = self.values[i, s, a]
        return out.reshape(x.shape[:-1])


class MarkovLattice:
    """Finite-state, discrete-time model of the uncontrolled process.

    ``kernels`` is either a single row-stochastic ``(S, S)`` matrix (time
    homogeneous) or an array ``(N, S, S)`` with one matrix per step.
    ``reward(t, x)`` must accept ``x`` of shape ``(..., dim)``.
    """

    def __init__(self, grid: TimeGrid, states, kernels, reward: Reward, *,
                 initial=None, gamma_bound: float | None = None):
        self.grid = grid
        states = np.asarray(states, dtype=float)
        if states.ndim == 1:
            states = states[:, None]
        self.states = states
        S = states.shape[0]
        kernels = np.asarray(kernels, dtype=float)
        if kernels.ndim == 2:
            kernels = np.broadcast_to(kernels, (grid.N, S, S))
        if kernels.shape != (grid.N, S, S):
            raise ValueError(f"kernels must have shape ({grid.N}, {S}, {S}), got {kernels.shape}")
        if np.any(kernels < 0) or np.max(np.abs(kernels.sum(axis=2) - 1.0)) > 1e-12:
            raise ValueError("every kernel row must be a probability vector (sum to 1 within 1e-12)")
        self.kernels = kernels
        if initial is None:
            initial = np.zeros(S)
            initial[0] = 1.0
        elif np.ndim(initial) == 0:
            k = int(initial)
            initial = np.zeros(S)
            initial[k] = 1.0
        self.initial = np.asarray(initial, dtype=float)
        if self.initial.shape != (S,) or abs(self.initial.sum() - 1.0) > 1e-12 or np.any(self.initial < 0):
            raise ValueError("initial distribution must be a probability vector over the states")
        self.reward = reward
        self.gamma_bound = gamma_bound

    @property
    def S(self) -> int:
        return self.states.shape[0]

    @property
    def dim(self) -> int:
        return self.states.shape[1]

    def reward_grid(self, a) -> np.ndarray:
        """``(N, S)`` array of ``g(t_i, x_s + a)`` for ``i < N``."""
        shifted = self.states + np.asarray(a, dtype=float)
        out = np.empty((self.grid.N, self.S))
        for i in range(self.grid.N):
            out[i] = self.reward(self.grid.time(i), shifted)
        if self.gamma_bound is not None and np.max(np.abs(out)) > self.gamma_bound * (1 + 1e-12):
            raise ValueError(f"|g| exceeds the declared bound {self.gamma_bound}")
        return out

    def reward_tensor(self, lattice: CumulativeLattice) -> np.ndarray:
        """``(V, N, S)`` rewards for every cumulative impulse value."""
        return np.stack([self.reward_grid(a) for a in lattice.values])

    def sup_reward(self, lattice: CumulativeLattice) -> float:
        return float(np.max(np.abs(self.reward_tensor(lattice))))


@dataclass(frozen=True)
class StrategyTrace:
    """Realized schedule: decision indices and menu indices of the sizes."""

    decisions: tuple
    sizes: tuple

    def __post_init__(self):
        object.__setattr__(self, "decisions", tuple(int(k) for k in self.decisions))
        object.__setattr__(self, "sizes", tuple(int(k) for k in self.sizes))


def check_admissible(trace: StrategyTrace, grid: TimeGrid, menu: ImpulseMenu) -> None:
    if len(trace.decisions) != len(trace.sizes):
        raise InadmissibleTrace("one size per decision is required")
    prev = None
    for tau, j in zip(trace.decisions, trace.sizes):
        if not 0 <= j < menu.p:
            raise InadmissibleTrace(f"size index {j} is not in the menu")
        if not 0 <= tau <= grid.N:
            raise InadmissibleTrace(f"decision index {tau} outside [0, N]")
        if prev is not None and tau < min(grid.N, prev + grid.d):
            raise InadmissibleTrace(f"decision at {tau} violates spacing after decision at {prev}")
        prev = tau


def controlled_levels(trace: StrategyTrace, grid: TimeGrid, menu: ImpulseMenu) -> np.ndarray:
    """Cumulative impulse in force at each index ``0..N-1`` (jumps at execution)."""
    levels = np.zeros((grid.N, menu.dim))
    for tau, j in zip(trace.decisions, trace.sizes):
        e = tau + grid.d
        if e < grid.N:
            levels[e:] += menu.items[j]
    return levels


def evaluate_controlled_payoff(trace: StrategyTrace, path, reward: Reward, grid: TimeGrid,
                               menu: ImpulseMenu, mode: str = RISK_NEUTRAL, *,
                               theta: float = 1.0, rate: float | None = None) -> float:
    """Payoff of one realized schedule along one path of the uncontrolled process.

    ``path`` holds the states at indices ``0..N`` (only ``0..N-1`` enter the
    left-endpoint sum). With ``rate`` set, rewards are discounted with the
    exact step weight ``int e^{-rs} ds`` and every decision before ``N`` pays
    ``e^{-r (tau + delta)} psi``; otherwise costs are charged iff ``tau < N - d``.
    """
    check_admissible(trace, grid, menu)
    path = np.asarray(path, dtype=float)
    if path.ndim == 1:
        path = path[:, None]
    if path.shape[0] < grid.N:
        raise ValueError("path must cover the whole grid")
    levels = controlled_levels(trace, grid, menu)
    g = np.array([float(reward(grid.time(i), path[i] + levels[i])) for i in range(grid.N)])
    if rate is None:
        total = g.sum() * grid.dt
        cost = sum(menu.costs[j] for tau, j in zip(trace.decisions, trace.sizes) if tau < grid.N - grid.d)
    else:
        total = float(g @ discount_weights(rate, grid.dt, grid.N))
        cost = sum(math.exp(-rate * (tau + grid.d) * grid.dt) * menu.costs[j]
                   for tau, j in zip(trace.decisions, trace.sizes) if tau < grid.N)
    inner = total - cost
    if mode == RISK_SENSITIVE:
        return math.exp(theta * inner)
    if mode in (RISK_NEUTRAL, DISCOUNTED):
        return float(inner)
    raise ValueError(f"unknown mode {mode!r}")


def discount_weights(rate: float, dt: float, N: int) -> np.ndarray:
    """Exact weights ``int_{t_i}^{t_{i+1}} e^{-rs} ds`` for ``i < N``."""
    t = np.arange(N) * dt
    return np.exp(-rate * t) * (-np.expm1(-rate * dt)) / rate


@dataclass
class StrategyRule:
    """State-feedback impulse strategy on a lattice.

    ``stop[m, a, i, s]`` tells whether to decide an impulse at index ``i`` in
    state ``s`` with cumulative impulse id ``a`` and ``m`` impulses remaining.
    ``size[m, a, k, s]`` is the menu index executed at index ``k`` (decision
    at ``k - d``) in state ``s``. A stationary rule (infinite horizon) has a
    single level that is used regardless of how many impulses were taken.
    """

    stop: np.ndarray
    size: np.ndarray
    stationary: bool = False
    mode: str = RISK_NEUTRAL
    meta: dict = field(default_factory=dict)

    @property
    def levels(self) -> int:
        return self.stop.shape[0] - 1

    def validate(self, grid: TimeGrid, lattice: CumulativeLattice, S: int, menu: ImpulseMenu) -> None:
        shape = (self.stop.shape[0], len(lattice), grid.N + 1, S)
        if self.stop.shape != shape or self.size.shape != shape:
            raise InadmissibleRule(f"rule tables have shape {self.stop.shape}/{self.size.shape}, expected {shape}")
        if self.stop.dtype != bool:
            raise InadmissibleRule("stop table must be boolean")
        if not self.stationary and self.stop[0].any():
            raise InadmissibleRule("no decision may be taken with zero impulses remaining")
        used = self.size[self.size >= 0]
        if used.size and used.max() >= menu.p:
            raise InadmissibleRule("size table refers to items outside the menu")

    def size_at(self, m: int, a: int, k: int, s) -> np.ndarray:
        sz = self.size[0 if self.stationary else m, a, k, s]
        return np.where(sz < 0, 0, sz)


def empty_rule(levels: int, lattice: CumulativeLattice, grid: TimeGrid, S: int,
               mode: str = RISK_NEUTRAL, stationary: bool = False) -> StrategyRule:
    L = 1 if stationary else levels + 1
    shape = (L, len(lattice), grid.N + 1, S)
    return StrategyRule(stop=np.zeros(shape, dtype=bool), size=np.zeros(shape, dtype=np.int64),
                        stationary=stationary, mode=mode)


def max_effective_impulses(grid: TimeGrid) -> int:
    """Most decisions with ``tau < T - delta`` that fit the spacing constraint."""
    if grid.N - grid.d <= 0:
        return 0
    return (grid.N - grid.d - 1) // grid.d + 1
