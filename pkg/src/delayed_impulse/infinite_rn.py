"""Infinite-horizon discounted risk-neutral solver.

The horizon is cut at a grid-aligned ``T_trunc`` chosen so that the
discounted tail of a bounded reward, ``gamma_bar * exp(-r T) / r``, is below
the requested tolerance. On the truncated grid the levels

    Y^0 = discounted reward without impulses
    Y^n = Snell envelope of the discounted reward with obstacle built from Y^{n-1}

increase to a fixed point; the optimal rule is read from that limit and is
stationary (it does not depend on how many impulses were already used).

Discount weights for the running reward are the exact integrals
``int_{t_i}^{t_{i+1}} e^{-rs} ds``, so a constant reward is integrated
without a Riemann error. Costs are discounted at execution time.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import NoConvergence, NonPositiveRate, ObstacleViolation
from .evaluate import forward_value
from .lattice_rn import eq_tol
from .model import (DISCOUNTED, CumulativeLattice, ImpulseMenu, MarkovLattice, StrategyRule,
                    build_cumulative_lattice, build_time_grid, discount_weights)

MONOTONE_TOL = 1e-12


@dataclass
class DiscountedModel:
    """Time-homogeneous chain plus a discount rate; the horizon is left open."""

    states: np.ndarray
    kernel: np.ndarray
    reward: object
    rate: float
    delta: float
    dt: float
    initial: object = None
    gamma_bound: float | None = None

    def __post_init__(self):
        if not self.rate > 0:
            raise NonPositiveRate(f"discount rate must be positive, got {self.rate}")
        self.kernel = np.asarray(self.kernel, dtype=float)
        if self.kernel.ndim != 2:
            raise ValueError("infinite horizon needs a single homogeneous kernel")

    def on_horizon(self, T: float, *, check_bound: bool = True) -> MarkovLattice:
        grid = build_time_grid(T, self.delta, self.dt)
        return MarkovLattice(grid, self.states, self.kernel, self.reward, initial=self.initial,
                             gamma_bound=self.gamma_bound if check_bound else None)


@dataclass(frozen=True)
class TruncationCertificate:
    T_trunc: float
    tail_bound: float
    epsilon_target: float
    gamma_bound: float
    rate: float


def _tail(gamma_bound, rate, T):
    return gamma_bound * math.exp(-rate * T) / rate


def choose_truncation(rate: float, gamma_bound: float, epsilon: float, *, delta: float | None = None,
                      dt: float = 1.0) -> TruncationCertificate:
    """Smallest ``T`` on the ``dt`` grid (and at least ``delta``) with a tail
    bound ``gamma_bound * exp(-rate T) / rate <= epsilon``."""
    if not rate > 0:
        raise NonPositiveRate(f"discount rate must be positive, got {rate}")
    if gamma_bound < 0 or not epsilon > 0:
        raise ValueError("need gamma_bound >= 0 and epsilon > 0")
    T_min = 0.0 if delta is None else float(delta)
    if gamma_bound == 0 or gamma_bound / rate <= epsilon:
        T = T_min
    else:
        T_star = math.log(gamma_bound / (rate * epsilon)) / rate
        k = math.ceil(T_star / dt - 1e-9)
        T = max(T_min, k * dt)
        while _tail(gamma_bound, rate, T) > epsilon:  # guard against rounding at the boundary
            T += dt
    return TruncationCertificate(T_trunc=T, tail_bound=_tail(gamma_bound, rate, T), epsilon_target=epsilon,
                                 gamma_bound=float(gamma_bound), rate=rate)


def _solve_horizon(dm: DiscountedModel, T: float) -> float:
    # the grid needs at least one step past the delay
    return max(T, dm.delta + dm.dt)


def depth_cap(T: float, delta: float) -> int:
    return max(1, math.ceil(T / delta - 1e-9))


def certify(dm: DiscountedModel, menu: ImpulseMenu, epsilon: float, *, max_rounds: int = 100) -> TruncationCertificate:
    """Truncation certificate for ``dm``.

    With a declared ``gamma_bound`` this is :func:`choose_truncation`. Without
    one, the bound is the sup of ``|g|`` over the states shifted by every
    cumulative impulse reachable before the horizon, iterated until the
    horizon and the bound agree (rewards that grow with the impulse make the
    bound depend on the horizon).
    """
    if dm.gamma_bound is not None:
        return choose_truncation(dm.rate, dm.gamma_bound, epsilon, delta=dm.delta, dt=dm.dt)
    gbar = 0.0
    T = dm.delta
    for _ in range(max_rounds):
        Ts = _solve_horizon(dm, T)
        lat = build_cumulative_lattice(menu, depth_cap(Ts, dm.delta))
        g_new = dm.on_horizon(Ts, check_bound=False).sup_reward(lat)
        if g_new <= gbar:
            break
        gbar = g_new
        T = choose_truncation(dm.rate, gbar, epsilon, delta=dm.delta, dt=dm.dt).T_trunc
    else:
        raise NoConvergence(max_rounds, float("nan"))
    return choose_truncation(dm.rate, gbar, epsilon, delta=dm.delta, dt=dm.dt)


@dataclass
class FixedPointReport:
    value: float
    Y: np.ndarray            # (V, N+1, S) limit field
    O: np.ndarray            # (V, N+1, S) obstacle built from the limit
    size_table: np.ndarray   # (V, N+1, S)
    rule: StrategyRule
    residuals: list
    iterations: int
    level_values: list
    certificate: TruncationCertificate
    model: MarkovLattice
    menu: ImpulseMenu
    lattice: CumulativeLattice
    rate: float
    Y0: np.ndarray
    history: list = field(default_factory=list)
    missing_child_reads: int = 0

    @property
    def tail_bound(self) -> float:
        return self.certificate.tail_bound

    @property
    def T_trunc(self) -> float:
        return self.model.grid.T


def _discounted_rewards(model: MarkovLattice, lattice: CumulativeLattice, rate: float) -> np.ndarray:
    w = discount_weights(rate, model.grid.dt, model.grid.N)
    return model.reward_tensor(lattice) * w[None, :, None]


def inf_y0(model: MarkovLattice, disc_rewards: np.ndarray) -> np.ndarray:
    N = model.grid.N
    Y = np.zeros((disc_rewards.shape[0], N + 1, model.S))
    P = model.kernels[0]
    for i in range(N - 1, -1, -1):
        Y[:, i] = disc_rewards[:, i] + Y[:, i + 1] @ P.T
    return Y


def inf_obstacle(Y_prev: np.ndarray, a: int, model: MarkovLattice, menu: ImpulseMenu, lattice: CumulativeLattice,
                 disc_rewards: np.ndarray, rate: float):
    """Returns ``(O, sizes, missing)`` for cumulative impulse ``a``.

    ``missing`` counts child reads that fell outside the depth cap and were
    taken as 0. Such children need more executions than fit before the
    horizon, so the reads only happen at nodes the controlled chain cannot
    reach; the counter is kept for the report.
    """
    grid = model.grid
    N, d = grid.N, grid.d
    P = model.kernels[0]
    kids = lattice.children[a]
    missing = int(np.sum(kids < 0))
    child_vals = np.where((kids >= 0)[:, None, None], Y_prev[np.maximum(kids, 0)], 0.0)
    t = grid.times
    cand = child_vals - np.exp(-rate * t)[None, :, None] * menu.costs[:, None, None]
    sizes = np.full((N + 1, model.S), -1, dtype=np.int64)
    sizes[d:] = np.argmax(cand[:, d:], axis=0)
    best = np.max(cand, axis=0)
    r = disc_rewards[a]
    psi_min = float(np.min(menu.costs))
    O = np.empty((N + 1, model.S))
    for i in range(N + 1):
        stop = min(i + d, N)
        W = best[i + d] if i + d <= N else np.full(model.S, -math.exp(-rate * (t[i] + grid.delta)) * psi_min)
        for j in range(stop - 1, i - 1, -1):
            W = r[j] + P @ W
        O[i] = W
    return O, sizes, missing


def inf_solve_level(obstacle: np.ndarray, model: MarkovLattice, disc_rewards_a: np.ndarray) -> np.ndarray:
    N = model.grid.N
    P = model.kernels[0]
    Y = np.empty_like(obstacle)
    Y[N] = 0.0
    for i in range(N - 1, -1, -1):
        Y[i] = np.maximum(obstacle[i], disc_rewards_a[i] + P @ Y[i + 1])
    if np.any(Y < obstacle - eq_tol(Y)):
        raise ObstacleViolation("value fell below obstacle")
    return Y


def _sweep(Y_prev, model, menu, lattice, disc_rewards, rate):
    V = len(lattice)
    O = np.empty_like(Y_prev)
    sizes = np.empty(Y_prev.shape, dtype=np.int64)
    Y = np.empty_like(Y_prev)
    missing = 0
    for a in range(V):
        O[a], sizes[a], m = inf_obstacle(Y_prev, a, model, menu, lattice, disc_rewards, rate)
        missing += m
        Y[a] = inf_solve_level(O[a], model, disc_rewards[a])
    return Y, O, sizes, missing


def inf_iterate(dm: DiscountedModel, menu: ImpulseMenu, *, epsilon: float = 1e-6, epsilon_fix: float = 1e-8,
                n_max: int | None = None, T_trunc: float | None = None, keep_history: bool = True) -> FixedPointReport:
    """Monotone level iteration to the fixed point on a certified horizon.

    ``T_trunc`` overrides the certified horizon (the certificate is then
    recomputed for that horizon so ``tail_bound`` stays honest).
    """
    if not epsilon_fix > 0:
        raise ValueError("epsilon_fix must be positive")
    cert = certify(dm, menu, epsilon)
    if T_trunc is not None:
        cert = TruncationCertificate(T_trunc=float(T_trunc), tail_bound=_tail(cert.gamma_bound, dm.rate, T_trunc),
                                     epsilon_target=epsilon, gamma_bound=cert.gamma_bound, rate=dm.rate)
    T = _solve_horizon(dm, cert.T_trunc)
    model = dm.on_horizon(T)
    cap = depth_cap(T, dm.delta)
    if n_max is None:
        n_max = 10 * cap
    lattice = build_cumulative_lattice(menu, cap)
    rewards = _discounted_rewards(model, lattice, dm.rate)
    Y0 = inf_y0(model, rewards)
    Y_prev = Y0
    history = [Y0] if keep_history else []
    residuals = []
    level_values = [float(model.initial @ Y0[lattice.root, 0])]
    for n in range(1, n_max + 1):
        Y, O, sizes, missing = _sweep(Y_prev, model, menu, lattice, rewards, dm.rate)
        drop = float(np.max(Y_prev - Y))
        if drop > MONOTONE_TOL:
            raise ObstacleViolation(f"level {n} decreased by {drop:.3e}; iteration is not monotone")
        res = float(np.max(np.abs(Y - Y_prev)))
        residuals.append(res)
        level_values.append(float(model.initial @ Y[lattice.root, 0]))
        if keep_history:
            history.append(Y)
        Y_prev = Y
        if res < epsilon_fix:
            break
    else:
        raise NoConvergence(n_max, residuals[-1])
    # obstacle and sizes consistent with the limit itself
    _, O, sizes, missing = _sweep(Y_prev, model, menu, lattice, rewards, dm.rate)
    rule = inf_extract_strategy(Y_prev, O, sizes)
    return FixedPointReport(value=level_values[-1], Y=Y_prev, O=O, size_table=sizes, rule=rule, residuals=residuals,
                            iterations=len(residuals), level_values=level_values, certificate=cert, model=model,
                            menu=menu, lattice=lattice, rate=dm.rate, Y0=Y0, history=history,
                            missing_child_reads=missing)


def inf_extract_strategy(Y: np.ndarray, O: np.ndarray, sizes: np.ndarray) -> StrategyRule:
    stop = (Y - O) <= eq_tol(Y)
    return StrategyRule(stop=stop[None], size=sizes[None].copy(), stationary=True, mode=DISCOUNTED,
                        meta={"stationary": True})


def inf_evaluate_strategy(rule: StrategyRule, report: FixedPointReport) -> float:
    """Discounted payoff of ``rule`` on the truncated horizon of ``report``."""
    return forward_value(rule, report.model, report.menu, report.lattice, DISCOUNTED, rate=report.rate)


def gamma_bound_field(report: FixedPointReport) -> np.ndarray:
    """``gamma_bar * exp(-r t_i) / r`` on the grid: the sandwich upper bound."""
    t = report.model.grid.times
    return report.certificate.gamma_bound * np.exp(-report.rate * t) / report.rate
