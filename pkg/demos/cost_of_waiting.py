"""How much is lost to execution delay?

A three-state mean-reverting chain drives a linear reward. The controller
can shift the state up by 0.5 or 1.0 at a small cost. We solve the same
problem for a range of delays and watch the value fall as actions take
longer to land.

    python demos/cost_of_waiting.py
"""
import numpy as np

from delayed_impulse import ImpulseMenu, LinearLevelReward, MarkovLattice, build_time_grid, solve

T, dt = 2.0, 0.05
states = [-1.0, 0.0, 1.0]
# sticky chain that drifts back toward the middle state
P = np.array([[0.90, 0.10, 0.00],
              [0.05, 0.90, 0.05],
              [0.00, 0.10, 0.90]])
menu = ImpulseMenu([0.5, 1.0], [0.02, 0.05])

print(f"{'delay':>6} {'impulses':>9} {'value':>10}")
for delay in (0.1, 0.25, 0.5, 1.0, 1.5):
    grid = build_time_grid(T, delay, dt)
    model = MarkovLattice(grid, states, P, LinearLevelReward([1.0]), initial=0)
    rep = solve(model, menu)
    print(f"{delay:6.2f} {grid.max_impulses:9d} {rep.value:10.5f}")

# Each executed shift keeps paying until the horizon, so early impulses are
# worth far more than late ones. Long delays push every execution later and
# cut the number that fit at all.
