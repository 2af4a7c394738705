"""Self-check suites behind ``delayed-impulse verify``.

Each suite returns a list of :class:`Check` rows; a suite fails when any row
fails. The tolerances are the ones the solvers are built to meet.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from . import fixtures
from .infinite_rn import gamma_bound_field, inf_evaluate_strategy, inf_iterate
from .lattice_rn import evaluate_strategy_exact, solve
from .lattice_rs import rs_evaluate_strategy_exact, rs_solve
from .lsmc import MarkovChainSpec, lsmc_solve, simulate_paths, simulate_strategy_payoff
from .model import RISK_SENSITIVE, build_time_grid
from .oracle import brute_force_tree_value, enumerate_deterministic, max_admissible_impulses, \
    random_admissible_strategy
from .swing import SwingConfig, build_swing, price_swing


@dataclass
class Check:
    name: str
    passed: bool
    detail: str

    def as_dict(self):
        return {"name": self.name, "passed": bool(self.passed), "detail": self.detail}


def _r3_family():
    return [fixtures.r3()] + fixtures.r3_variants()


def suite_oracle(seed: int = 0) -> list[Check]:
    out = []
    t0 = time.perf_counter()
    worst = 0.0
    for model, menu in _r3_family():
        worst = max(worst, abs(solve(model, menu).value - brute_force_tree_value(model, menu)))
    dt = time.perf_counter() - t0
    out.append(Check("tree oracle, risk-neutral", worst <= 1e-10 and dt < 10, f"max |diff| {worst:.2e} in {dt:.1f}s"))
    t0 = time.perf_counter()
    worst = 0.0
    for model, menu in _r3_family():
        ref = brute_force_tree_value(model, menu, RISK_SENSITIVE)
        worst = max(worst, abs(rs_solve(model, menu).value - ref) / abs(ref))
    dt = time.perf_counter() - t0
    out.append(Check("tree oracle, risk-sensitive", worst <= 1e-10 and dt < 10, f"max rel diff {worst:.2e} in {dt:.1f}s"))
    model, menu = fixtures.d1()
    v, sched = enumerate_deterministic(model, menu)
    times = [t for t, _ in sched]
    ok = abs(v - fixtures.D1_VALUE) <= 1e-12 and np.allclose(times, [0.0, 0.4])
    out.append(Check("deterministic enumeration D1", ok, f"value {v!r}, decisions at {times}"))
    return out


def suite_invariants(seed: int = 0, n_rules: int = 100) -> list[Check]:
    out = []
    model, menu = fixtures.d1()
    rn, rs = solve(model, menu), rs_solve(model, menu)
    ok = abs(rn.value - 0.6) <= 1e-12 and abs(rs.value - math.exp(0.6)) <= 1e-12
    out.append(Check("D1 closed form", ok, f"rn {rn.value!r}, rs {rs.value!r}"))

    dm, dmenu = fixtures.d2()
    rep = inf_iterate(dm, dmenu, epsilon=1e-6)
    err = abs(rep.value - fixtures.D2_VALUE)
    out.append(Check("D2 closed form", err <= 1e-8 + 2 * rep.tail_bound,
                     f"|diff| {err:.2e}, allowed {1e-8 + 2 * rep.tail_bound:.2e}"))

    restr, term, ident, dom = 0.0, 0.0, 0.0, -math.inf
    fixtures_fin = [fixtures.d1()] + _r3_family()
    for k, (model, menu) in enumerate(fixtures_fin):
        for rep_ in (solve(model, menu), rs_solve(model, menu)):
            restr = max(restr, max(rep_.diagnostics["restriction_gap"], default=0.0))
            target = 1.0 if rep_.mode == RISK_SENSITIVE else 0.0
            Yn = rep_.Y[:, :, model.grid.N]
            term = max(term, float(np.nanmax(np.abs(Yn - target))))
            if rep_.mode == RISK_SENSITIVE:
                J = rs_evaluate_strategy_exact(rep_.rule, model, menu)
            else:
                J = evaluate_strategy_exact(rep_.rule, model, menu)
            ident = max(ident, abs(J - rep_.value))
            for r in range(n_rules if k < 2 else max(1, n_rules // 20)):
                rule = random_admissible_strategy(model.grid, menu, rep_.levels, model.S, (seed, k, r),
                                                  lattice=rep_.lattice, mode=rep_.mode)
                if rep_.mode == RISK_SENSITIVE:
                    Jr = rs_evaluate_strategy_exact(rule, model, menu, rep_.lattice)
                else:
                    Jr = evaluate_strategy_exact(rule, model, menu, rep_.lattice)
                dom = max(dom, Jr - rep_.value)
    out.append(Check("restriction identity", restr <= 1e-12, f"max gap {restr:.2e}"))
    out.append(Check("terminal conditions", term == 0.0, f"max deviation {term:.2e}"))
    out.append(Check("strategy identity", ident <= 1e-10, f"max |J - Y| {ident:.2e}"))
    out.append(Check("dominance over random rules", dom <= 1e-10, f"max excess {dom:.2e}"))

    dm, dmenu = fixtures.r3_infinite()
    rep = inf_iterate(dm, dmenu, epsilon=1e-6)
    mono = max(float(np.max(a - b)) for a, b in zip(rep.history[:-1], rep.history[1:]))
    upper = gamma_bound_field(rep)[None, :, None]
    sandwich = all(np.all(Y >= rep.Y0 - 1e-12) and np.all(Y <= upper + 1e-12) for Y in rep.history)
    rep2 = inf_iterate(dm, dmenu, epsilon=1e-6, T_trunc=2 * rep.T_trunc)
    shift = abs(rep2.value - rep.value)
    ok = mono <= 1e-12 and sandwich and shift <= 2 * rep.tail_bound
    out.append(Check("infinite horizon monotone and sandwiched", ok,
                     f"max decrease {mono:.2e}, sandwich {sandwich}, doubling shift {shift:.2e}"))
    J = inf_evaluate_strategy(rep.rule, rep)
    out.append(Check("infinite horizon strategy identity", abs(J - rep.value) <= 1e-8 + rep.tail_bound,
                     f"|J - Y| {abs(J - rep.value):.2e}"))

    counts = []
    for T, delta in ((1.0, 0.4), (1.0, 0.5), (1.0, 0.3)):
        g = build_time_grid(T, delta, 0.1)
        counts.append((g.max_impulses, max_admissible_impulses(g), math.floor(T / delta + 1e-12)))
    ok = all(a == b == c for a, b, c in counts)
    out.append(Check("impulse count", ok, f"(solver, enumeration, floor) = {counts}"))
    return out


SWING_ACCEPTANCE = SwingConfig(s0=10.0, sigma=0.3, T=1.0, refraction=0.2, dt=0.05, strikes=[9.8, 10.0, 10.2],
                               rights=3, costs=[0.05])


def suite_mc(seed: int = 0, paths: int = 100_000) -> list[Check]:
    t0 = time.perf_counter()
    exact = price_swing(SWING_ACCEPTANCE).price
    model, menu = build_swing(SWING_ACCEPTANCE)
    fit = simulate_paths(MarkovChainSpec(model), model.grid, paths, 2 * seed + 1)
    rep = lsmc_solve(fit, menu, model.reward, max_impulses=SWING_ACCEPTANCE.rights)
    fresh = simulate_paths(MarkovChainSpec(model), model.grid, paths, 2 * seed + 2)
    oos = simulate_strategy_payoff(rep.rule, fresh, model.reward)
    dt = time.perf_counter() - t0
    return [
        Check("LSMC in-sample", abs(rep.value_insample - exact) <= 3 * rep.stderr,
              f"{rep.value_insample:.5f} +- {rep.stderr:.5f} vs exact {exact:.5f}"),
        Check("LSMC out-of-sample", abs(oos.mean - exact) <= 3 * oos.stderr and oos.mean <= exact + 3 * oos.stderr,
              f"{oos.mean:.5f} +- {oos.stderr:.5f} vs exact {exact:.5f}"),
        Check("LSMC runtime", dt < 120, f"{dt:.1f}s"),
    ]


SUITES = {"oracle": suite_oracle, "invariants": suite_invariants, "mc": suite_mc}
