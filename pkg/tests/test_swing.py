import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from delayed_impulse.oracle import enumerate_deterministic
from delayed_impulse.swing import LayeredReward, SwingConfig, build_swing, crr_chain, exercise_boundary, price_swing


def test_layered_reward_values():
    g = LayeredReward([9.0, 10.0])
    x = np.array([[11.0, 0.0], [11.0, 1.0], [11.0, 2.0], [11.0, 3.0], [11.0, 1.5]])
    np.testing.assert_allclose(g(0.0, x), [0.0, 2.0, 3.0, 4.0, 2.5])


def test_flat_layers_without_volume_are_worthless():
    cfg = SwingConfig(s0=10, sigma=0.2, T=1, refraction=0.25, dt=0.125, strikes=[10, 10], rights=3,
                      volumes=[0.0], costs=[0.0])
    assert price_swing(cfg).price == 0.0


def test_deterministic_spot_matches_enumeration():
    cfg = SwingConfig(s0=11.0, sigma=0.0, T=1, refraction=0.25, dt=0.125, strikes=[10.0], rights=3, costs=[0.1])
    rep = price_swing(cfg)
    model, menu = build_swing(cfg)
    v, sched = enumerate_deterministic(model, menu, max_impulses=3)
    assert rep.price == pytest.approx(v, abs=1e-12)
    # three exercises at 0, 0.25, 0.5 earn 0.75 + 0.5 + 0.25 minus costs
    assert v == pytest.approx(1.5 - 0.3, abs=1e-12)


@given(sigma=st.floats(0.05, 0.6), n=st.integers(1, 3))
def test_more_rights_never_hurt(sigma, n):
    base = dict(s0=10.0, sigma=sigma, T=1.0, refraction=0.25, dt=0.125, strikes=[9.5, 10.0, 10.5], costs=[0.05])
    lo = price_swing(SwingConfig(rights=n, **base)).price
    hi = price_swing(SwingConfig(rights=n + 1, **base)).price
    assert hi >= lo - 1e-12


def test_rights_capped_by_refraction():
    cfg = SwingConfig(s0=10.0, sigma=0.2, T=1.0, refraction=0.25, dt=0.125, strikes=[10.0], rights=9)
    assert price_swing(cfg).rights_used == 4


def test_crr_chain_is_martingale_under_zero_drift():
    spots, P, k0 = crr_chain(10.0, 0.3, 0.0, 6, 0.1)
    inner = slice(1, len(spots) - 1)
    np.testing.assert_allclose((P @ spots)[inner], spots[inner], rtol=1e-13)
    assert spots[k0] == 10.0


def test_boundary_rows():
    cfg = SwingConfig(s0=10.0, sigma=0.3, T=1.0, refraction=0.25, dt=0.125, strikes=[10.0], rights=2, costs=[0.05])
    rep = price_swing(cfg)
    rows = exercise_boundary(rep.solve)
    assert rows and all(len(r) == 4 for r in rows)
    finite = [r for r in rows if not math.isnan(r[3])]
    assert finite  # exercising is optimal somewhere
