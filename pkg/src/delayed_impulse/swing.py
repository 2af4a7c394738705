"""Swing contract with a refraction period as a delayed impulse problem.

State is ``(spot, volume)``. Each exercise adds a volume increment after the
refraction delay; from then on the holder earns ``spot - strike`` per unit of
volume and per unit of time, where the strike depends on the volume layer.
The spot follows a recombining CRR binomial chain.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import BadSpec
from .lattice_rn import RNSolveReport, solve
from .model import ImpulseMenu, MarkovLattice, build_time_grid


class LayeredReward:
    """``g(t, (s, v)) = sum_{k < v} (s - K_k)``; layers past the last strike reuse it.

    Equivalently ``v * (s - mean strike of the first v layers)``. Volumes
    need not be integers: the fractional part of ``v`` is priced at the
    next layer's strike.
    """

    def __init__(self, strikes):
        self.strikes = np.asarray(strikes, dtype=float).reshape(-1)
        if self.strikes.size == 0:
            raise BadSpec("at least one strike layer is needed")

    def strike_mass(self, v: np.ndarray) -> np.ndarray:
        # sum of strikes over the first v units of volume
        K = self.strikes
        cum = np.concatenate([[0.0], np.cumsum(K)])
        v = np.maximum(v, 0.0)
        full = np.floor(v).astype(np.int64)
        frac = v - full
        inner = np.minimum(full, K.size)
        extra = full - inner
        base = cum[inner] + extra * K[-1]
        nxt = K[np.minimum(full, K.size - 1)]
        return base + frac * nxt

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        s, v = x[..., 0], x[..., 1]
        return v * s - self.strike_mass(v)


@dataclass
class SwingConfig:
    s0: float
    sigma: float
    T: float
    refraction: float
    dt: float
    strikes: list
    rights: int
    volumes: list = field(default_factory=lambda: [1.0])
    costs: list | None = None
    mu: float = 0.0


def crr_chain(s0: float, sigma: float, mu: float, N: int, dt: float):
    """States ``s0 u^k`` for ``k = -N..N`` and the homogeneous up/down kernel."""
    if sigma == 0:
        if mu != 0:
            raise BadSpec("a deterministic spot needs mu = 0 on a finite chain")
        return np.array([s0]), np.ones((1, 1)), 0
    u = math.exp(sigma * math.sqrt(dt))
    dn = 1.0 / u
    p = (math.exp(mu * dt) - dn) / (u - dn)
    if not 0 < p < 1:
        raise BadSpec(f"binomial probability {p} is outside (0, 1); reduce dt or drift")
    ks = np.arange(-N, N + 1)
    S = ks.size
    P = np.zeros((S, S))
    for r in range(S):
        if r + 1 < S:
            P[r, r + 1] = p
        else:
            P[r, r] += p
        if r > 0:
            P[r, r - 1] = 1 - p
        else:
            P[r, r] += 1 - p
    return s0 * u ** ks, P, N


def build_swing(cfg: SwingConfig):
    grid = build_time_grid(cfg.T, cfg.refraction, cfg.dt)
    spots, P, k0 = crr_chain(cfg.s0, cfg.sigma, cfg.mu, grid.N, grid.dt)
    states = np.column_stack([spots, np.zeros_like(spots)])
    model = MarkovLattice(grid, states, P, LayeredReward(cfg.strikes), initial=k0)
    items = [[0.0, float(v)] for v in cfg.volumes]
    costs = [0.0] * len(items) if cfg.costs is None else cfg.costs
    return model, ImpulseMenu(items, costs)


@dataclass
class SwingReport:
    price: float
    rights_used: int
    solve: RNSolveReport
    boundary: list  # rows (time, rights_left, volume, spot_threshold)


def exercise_boundary(report: RNSolveReport) -> list:
    """Lowest spot at which exercising is optimal, per time, rights left and volume.

    ``nan`` where no spot triggers an exercise.
    """
    model, lat = report.model, report.lattice
    spots = model.states[:, 0]
    order = np.argsort(spots)
    rows = []
    N, d = model.grid.N, model.grid.d
    for n in range(1, report.levels + 1):
        for a in np.flatnonzero(lat.depth <= report.levels - n):
            for i in range(N - d):
                stop = report.rule.stop[n, a, i, order]
                thr = float(spots[order][np.argmax(stop)]) if stop.any() else math.nan
                rows.append((model.grid.time(i), n, float(lat.values[a, 1]), thr))
    return rows


def price_swing(cfg: SwingConfig) -> SwingReport:
    model, menu = build_swing(cfg)
    rights = min(int(cfg.rights), model.grid.max_impulses)
    rep = solve(model, menu, max_impulses=rights)
    return SwingReport(price=rep.value, rights_used=rights, solve=rep, boundary=exercise_boundary(rep))
