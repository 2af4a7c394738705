"""Command line entry point: ``delayed-impulse {solve,price-swing,verify,simulate}``.

Exit codes: 0 success, 1 verification failure, 2 bad config, 3 solver error.
Set ``DELAYED_IMPULSE_THREADS`` to cap BLAS threads.
"""
from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from . import io
from .errors import ImpulseControlError
from .infinite_rn import inf_iterate
from .lattice_rn import solve
from .lattice_rs import rs_solve
from .lsmc import MarkovChainSpec, RegressionBasis, lsmc_solve, save_paths, simulate_paths, simulate_strategy_payoff
from .swing import price_swing
from .verify import SUITES

EXIT_VERIFY, EXIT_CONFIG, EXIT_SOLVER = 1, 2, 3


def _rn_rs_payload(rep, mode):
    rule = rep.rule
    payload = {
        "mode": rep.mode,
        "value": rep.value,
        "level_values": list(map(float, rep.level_values)),
        "levels": rep.levels,
        "grid": {"T": rep.model.grid.T, "delta": rep.model.grid.delta, "dt": rep.model.grid.dt,
                 "N": rep.model.grid.N, "d": rep.model.grid.d},
        "lattice_size": len(rep.lattice),
        "strategy": {"stop_nodes": int(rule.stop.sum()), "stationary": rule.stationary},
        "diagnostics": rep.diagnostics,
    }
    if mode == "rs":
        payload.update(log_space=rep.log_space, log_value=rep.log_value, theta=rep.theta)
    return payload


def cmd_solve(args) -> int:
    doc = io.read_config(args.config, io.MODEL_SCHEMA)
    out = args.out
    if args.mode == "inf":
        dm, menu = io.load_discounted(doc)
        disc = doc["discount"]
        eps = args.epsilon if args.epsilon is not None else disc.get("epsilon", 1e-6)
        rep = inf_iterate(dm, menu, epsilon=eps, epsilon_fix=disc.get("epsilon_fix", 1e-8),
                          n_max=disc.get("n_max"), T_trunc=args.tmax)
        payload = {
            "mode": "discounted",
            "value": rep.value,
            "T_trunc": rep.T_trunc,
            "tail_bound": rep.tail_bound,
            "iterations": rep.iterations,
            "residuals": rep.residuals,
            "level_values": rep.level_values,
            "rate": rep.rate,
            "grid": {"T": rep.model.grid.T, "delta": rep.model.grid.delta, "dt": rep.model.grid.dt},
            "lattice_size": len(rep.lattice),
            "strategy": {"stop_nodes": int(rep.rule.stop.sum()), "stationary": True},
        }
        io.write_report(out, payload)
        io.write_fields(out, rep.Y[None], rep.O[None], rep.model, level_ids=[rep.iterations])
        io.write_strategy(out, rep.rule, rep.model)
    else:
        model, menu = io.load_model(doc)
        L = doc.get("max_impulses")
        if args.mode == "rs":
            rep = rs_solve(model, menu, L, theta=doc.get("theta", 1.0))
        else:
            rep = solve(model, menu, L)
        io.write_report(out, _rn_rs_payload(rep, args.mode))
        io.write_fields(out, rep.Y, rep.O, model)
        io.write_strategy(out, rep.rule, model)
    print(f"value {rep.value!r}  ->  {out}")
    return 0


def cmd_price_swing(args) -> int:
    doc = io.read_config(args.config, io.SWING_SCHEMA)
    cfg = io.load_swing(doc)
    rep = price_swing(cfg)
    out = args.out
    payload = {"mode": "risk-neutral", "price": rep.price, "value": rep.price, "rights_used": rep.rights_used,
               "level_values": list(map(float, rep.solve.level_values)), "swing": doc["swing"]}
    io.write_report(out, payload)
    io.write_strategy(out, rep.solve.rule, rep.solve.model)
    with open(os.path.join(out, "boundary.csv"), "w") as fh:
        fh.write("time,rights_left,volume,spot_threshold\n")
        for t, n, v, s in rep.boundary:
            fh.write(f"{t!r},{n},{v!r},{'' if math.isnan(s) else repr(s)}\n")
    print(f"price {rep.price!r}  ->  {out}")
    return 0


def cmd_verify(args) -> int:
    suites = list(SUITES) if args.suite == "all" else [args.suite]
    rows = []
    for name in suites:
        kw = {"seed": args.seed}
        if name == "mc" and args.paths:
            kw["paths"] = args.paths
        for chk in SUITES[name](**kw):
            rows.append({"suite": name, **chk.as_dict()})
            print(f"[{'PASS' if chk.passed else 'FAIL'}] {name:10s} {chk.name:45s} {chk.detail}")
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        with open(os.path.join(args.out, "verify.json"), "w") as fh:
            json.dump({"seed": args.seed, "results": rows}, fh, indent=2)
    return 0 if all(r["passed"] for r in rows) else EXIT_VERIFY


def cmd_simulate(args) -> int:
    doc = io.read_config(args.config, io.MODEL_SCHEMA)
    model, menu = io.load_model(doc)
    M = args.paths or 10_000
    fit_seed, oos_seed = args.seed, args.seed + 1
    fit = simulate_paths(MarkovChainSpec(model), model.grid, M, fit_seed)
    basis = RegressionBasis(degree=args.degree)
    rep = lsmc_solve(fit, menu, model.reward, basis=basis, max_impulses=doc.get("max_impulses"))
    fresh = simulate_paths(MarkovChainSpec(model), model.grid, M, oos_seed)
    res = simulate_strategy_payoff(rep.rule, fresh, model.reward)
    payload = {"value_insample": rep.value_insample, "stderr_insample": rep.stderr, "value_oos": res.mean,
               "stderr": res.stderr, "ci95": list(res.ci95), "seeds": {"fit": fit_seed, "oos": oos_seed},
               "paths": M, "basis": {"degree": basis.degree}, "diagnostics": rep.diagnostics}
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "lsmc.json"), "w") as fh:
        json.dump(payload, fh, indent=2, default=float)
    if args.save_paths:
        save_paths(fresh, os.path.join(args.out, "paths.csv"))
    print(f"in-sample {rep.value_insample:.6f} +- {rep.stderr:.6f}   out-of-sample {res.mean:.6f} +- {res.stderr:.6f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="delayed-impulse", description="Impulse control with execution delay on lattices.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="solve a model file")
    s.add_argument("config")
    s.add_argument("--mode", choices=["rn", "rs", "inf"], default="rn")
    s.add_argument("--out", default="out")
    s.add_argument("--epsilon", type=float, help="truncation tolerance for --mode inf")
    s.add_argument("--tmax", type=float, help="override the truncation horizon for --mode inf")
    s.set_defaults(func=cmd_solve)

    s = sub.add_parser("price-swing", help="price a swing contract on a binomial spot")
    s.add_argument("config")
    s.add_argument("--out", default="out")
    s.set_defaults(func=cmd_price_swing)

    s = sub.add_parser("verify", help="run the self-check suites")
    s.add_argument("--suite", choices=["oracle", "invariants", "mc", "all"], default="all")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--paths", type=int)
    s.add_argument("--out")
    s.set_defaults(func=cmd_verify)

    s = sub.add_parser("simulate", help="least-squares Monte Carlo on a model file")
    s.add_argument("config")
    s.add_argument("--paths", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--degree", type=int, default=2)
    s.add_argument("--out", default="out")
    s.add_argument("--save-paths", action="store_true")
    s.set_defaults(func=cmd_simulate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    np.seterr(over="warn")
    try:
        return args.func(args)
    except io.ConfigError as e:
        print(f"config error:\n{e}", file=sys.stderr)
        return EXIT_CONFIG
    except (ImpulseControlError, ValueError, KeyError) as e:
        print(f"solver error: {type(e).__name__}: {e}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
