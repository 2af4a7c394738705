"""Optimal impulse control with execution delay on finite Markov lattices.

Finite horizon (risk-neutral and exponential utility), discounted infinite
horizon, a least-squares Monte Carlo variant, and a brute-force oracle for
small instances.
"""
import os

_threads = os.environ.get("DELAYED_IMPULSE_THREADS")
if _threads:
    # must happen before numpy loads its BLAS
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _threads)

from .errors import *  # noqa: E402,F401,F403
from .model import (DISCOUNTED, RISK_NEUTRAL, RISK_SENSITIVE, CumulativeLattice, ImpulseMenu,  # noqa: E402
                    LinearLevelReward, MarkovLattice, StrategyRule, StrategyTrace, TableReward, TimeGrid,
                    build_cumulative_lattice, build_time_grid, check_admissible, evaluate_controlled_payoff)
from .lattice_rn import solve, evaluate_strategy_exact  # noqa: E402
from .lattice_rs import rs_solve, rs_evaluate_strategy_exact  # noqa: E402
from .infinite_rn import DiscountedModel, choose_truncation, inf_evaluate_strategy, inf_iterate  # noqa: E402

__version__ = "0.1.0"
