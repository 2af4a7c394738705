"""Infinite horizon with discounting.

The solver cuts the horizon where the discounted tail of the reward bound
falls below a tolerance, then runs a monotone value iteration over the
number of impulses. Tighter tolerances cost a longer lattice; the value
settles well before that.
"""
from delayed_impulse import fixtures
from delayed_impulse.infinite_rn import inf_iterate

dm, menu = fixtures.r3_infinite()
for eps in (1e-2, 1e-4, 1e-6, 1e-8):
    rep = inf_iterate(dm, menu, epsilon=eps, keep_history=False)
    print(f"eps {eps:7.0e}: horizon {rep.T_trunc:6.2f}  iterations {rep.iterations:3d}  value {rep.value:.9f}")

rep = inf_iterate(dm, menu, epsilon=1e-6)
print("\nvalue by iteration (impulse budget):")
for n, v in enumerate(rep.level_values):
    print(f"  {n:3d}  {v:.9f}")
    if n >= 8:
        print("  ...")
        break
print("sup-norm residuals of the last steps:", ", ".join(f"{r:.1e}" for r in rep.residuals[-3:]))
