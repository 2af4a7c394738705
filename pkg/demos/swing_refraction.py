"""Swing contract: price against refraction period, plus an exercise boundary.

Three volume layers with rising strikes on a binomial spot. A longer
refraction period means fewer usable rights before expiry and a later
start to each volume increment.

    python demos/swing_refraction.py
"""
import math

from delayed_impulse.swing import SwingConfig, price_swing

base = dict(s0=10.0, sigma=0.35, T=1.0, dt=0.05, strikes=[9.8, 10.0, 10.2], rights=3, costs=[0.05])

for refr in (0.05, 0.1, 0.2, 0.25, 0.5):
    rep = price_swing(SwingConfig(refraction=refr, **base))
    print(f"refraction {refr:4.2f}: rights usable {rep.rights_used}, price {rep.price:.5f}")

rep = price_swing(SwingConfig(refraction=0.2, **base))
print("\nlowest spot that triggers an exercise (blank: never)")
table = {}
for t, n, v, s in rep.boundary:
    # volume already held is 3 - n on the path where every right so far was used
    if v == rep.rights_used - n:
        table.setdefault(round(t, 10), {})[n] = s
print("   t    " + "".join(f"{n} left   " for n in range(rep.rights_used, 0, -1)))
for t in sorted(table)[::2]:
    cells = (table[t].get(n, math.nan) for n in range(rep.rights_used, 0, -1))
    print(f"  {t:4.2f}  " + "".join(" " * 9 if math.isnan(c) else f"{c:7.3f}  " for c in cells))
