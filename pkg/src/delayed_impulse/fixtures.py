"""Small reference instances used by the tests, the demos and ``verify``.

``d1``/``d2`` are deterministic (one state) with closed-form values; ``r3``
is a seeded three-state chain small enough for the brute-force tree;
``r3_infinite`` is its discounted, time-homogeneous counterpart.
"""
from __future__ import annotations

import math

import numpy as np

from .infinite_rn import DiscountedModel
from .model import ImpulseMenu, LinearLevelReward, MarkovLattice, build_time_grid


def d1():
    """g = x, one unit impulse costing 0.1, T=1, delay 0.4, dt=0.1."""
    grid = build_time_grid(1.0, 0.4, 0.1)
    model = MarkovLattice(grid, [0.0], [[1.0]], LinearLevelReward([1.0]))
    return model, ImpulseMenu([1.0], [0.1])


D1_VALUE = 0.6


def d2():
    grid_free = DiscountedModel(states=[0.0], kernel=[[1.0]], reward=LinearLevelReward([1.0]),
                                rate=1.0, delta=0.5, dt=0.5)
    return grid_free, ImpulseMenu([1.0], [0.2])


# impulse at every delay step, each one paying (1/r - psi) from execution on
D2_VALUE = 0.8 * math.exp(-0.5) / (1.0 - math.exp(-0.5))


class WavyReward:
    """Bounded reward ``cos(x - c) + b * sin(t)`` with ``|g| <= 1 + |b|``."""

    def __init__(self, b: float = 0.0, c: float = 1.5):
        self.b = b
        self.c = c

    def __call__(self, t, x):
        x = np.asarray(x, dtype=float)
        return np.cos(x[..., 0] - self.c) + self.b * math.sin(t)

    @property
    def bound(self) -> float:
        return 1.0 + abs(self.b)


R3_STATES = [-0.6, 0.0, 0.7]


def r3(seed: int = 0, *, T: float = 1.0, delta: float = 0.25, dt: float = 0.125):
    """Three-state, time-inhomogeneous chain with Dirichlet kernels.

    Seed 0 is the base instance; other seeds also perturb costs and the
    time-dependent part of the reward.
    """
    rng = np.random.default_rng(seed)
    grid = build_time_grid(T, delta, dt)
    kernels = rng.dirichlet(np.ones(3), size=(grid.N, 3))
    kernels /= kernels.sum(axis=2, keepdims=True)
    b = 0.0 if seed == 0 else float(rng.uniform(-0.5, 0.5))
    c = 1.5 if seed == 0 else float(rng.uniform(0.5, 2.5))
    reward = WavyReward(b, c)
    costs = [0.05, 0.12] if seed == 0 else list(rng.uniform(0.0, 0.3, size=2))
    model = MarkovLattice(grid, R3_STATES, kernels, reward, initial=1, gamma_bound=reward.bound)
    return model, ImpulseMenu([0.5, 1.0], costs)


def r3_variants(n: int = 20):
    return [r3(seed) for seed in range(1, n + 1)]


def r3_infinite(seed: int = 0):
    """Discounted chain with a bounded reward and integer impulses, which
    keeps the cumulative lattice on the integers."""
    rng = np.random.default_rng(1000 + seed)
    kernel = rng.dirichlet(np.ones(3), size=3)
    kernel /= kernel.sum(axis=1, keepdims=True)
    reward = WavyReward(0.0, 2.0)
    dm = DiscountedModel(states=R3_STATES, kernel=kernel, reward=reward, rate=1.0, delta=0.5, dt=0.25,
                         initial=1, gamma_bound=reward.bound)
    return dm, ImpulseMenu([1.0, 2.0], [0.05, 0.1])
