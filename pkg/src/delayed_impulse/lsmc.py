"""Least-squares Monte Carlo version of the risk-neutral level recursion.

Conditional expectations are replaced by regressions of realized downstream
sums on features of the current path prefix (regress-later: the targets are
pathwise realized values, never previously fitted ones, except for the size
choice at execution which needs a prediction of the next level's value).

Per level ``n`` and cumulative impulse ``a``, going backward in ``i``:

* obstacle target ``L_i`` = window reward over ``[i, i+d)`` plus the realized
  value after executing the size picked by the fitted level ``n-1`` values;
* continuation target ``C_i`` = ``g_i dt + V_{i+1}``;
* stop where the fitted obstacle is at least the fitted continuation, and
  the realized value ``V_i`` follows the decision.

Costs and menu items enter exactly.
"""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BadSpec, SeedCollisionWarning, SingularDesignWarning
from .model import CumulativeLattice, ImpulseMenu, MarkovLattice, StrategyRule, TimeGrid, build_cumulative_lattice

COND_LIMIT = 1e12


# ---------------------------------------------------------------- paths

@dataclass(frozen=True)
class EulerSpec:
    """Euler scheme ``X += b(t, X) dt + sigma(t, X) sqrt(dt) Z`` with diagonal noise."""

    x0: tuple
    drift: Callable
    vol: Callable
    antithetic: bool = False


@dataclass(frozen=True)
class GBMSpec:
    """Exact lognormal steps for the first coordinate; ``pad`` zero coordinates are appended."""

    s0: float
    mu: float
    sigma: float
    pad: int = 0
    antithetic: bool = False


@dataclass(frozen=True)
class MarkovChainSpec:
    """Sample the finite chain of a lattice model; paths carry the state vectors."""

    model: MarkovLattice


@dataclass(frozen=True)
class PathEnsemble:
    paths: np.ndarray  # (M, N+1, dim)
    grid: TimeGrid
    seed: object
    spec: object = None
    state_index: np.ndarray | None = None  # (M, N+1) for chain ensembles

    @property
    def M(self) -> int:
        return self.paths.shape[0]

    @property
    def dim(self) -> int:
        return self.paths.shape[2]


def _normals(rng, M, N, dim, antithetic):
    if antithetic:
        if M % 2:
            raise BadSpec("antithetic sampling needs an even number of paths")
        Z = rng.standard_normal((M // 2, N, dim))
        return np.concatenate([Z, -Z])
    return rng.standard_normal((M, N, dim))


def simulate_paths(spec, grid: TimeGrid, M: int, seed) -> PathEnsemble:
    if M < 1:
        raise BadSpec("need at least one path")
    rng = np.random.default_rng(seed)
    N, dt = grid.N, grid.dt
    if isinstance(spec, GBMSpec):
        if spec.s0 <= 0 or spec.sigma < 0:
            raise BadSpec("GBM needs s0 > 0 and sigma >= 0")
        Z = _normals(rng, M, N, 1, spec.antithetic)[..., 0]
        steps = (spec.mu - 0.5 * spec.sigma ** 2) * dt + spec.sigma * math.sqrt(dt) * Z
        logS = np.concatenate([np.zeros((M, 1)), np.cumsum(steps, axis=1)], axis=1)
        paths = np.zeros((M, N + 1, 1 + spec.pad))
        paths[:, :, 0] = spec.s0 * np.exp(logS)
        out = PathEnsemble(paths, grid, seed, spec)
    elif isinstance(spec, EulerSpec):
        x0 = np.atleast_1d(np.asarray(spec.x0, dtype=float))
        Z = _normals(rng, M, N, x0.shape[0], spec.antithetic)
        paths = np.empty((M, N + 1, x0.shape[0]))
        paths[:, 0] = x0
        for i in range(N):
            t = grid.time(i)
            x = paths[:, i]
            paths[:, i + 1] = x + spec.drift(t, x) * dt + spec.vol(t, x) * math.sqrt(dt) * Z[:, i]
        if not np.all(np.isfinite(paths)):
            raise BadSpec("Euler paths blew up; check drift and volatility")
        out = PathEnsemble(paths, grid, seed, spec)
    elif isinstance(spec, MarkovChainSpec):
        model = spec.model
        if model.grid.N != N:
            raise BadSpec("chain model and ensemble grid differ")
        idx = np.empty((M, N + 1), dtype=np.int64)
        idx[:, 0] = rng.choice(model.S, size=M, p=model.initial)
        cdf = np.cumsum(model.kernels, axis=2)
        cdf[..., -1] = 1.0
        for i in range(N):
            u = rng.uniform(size=M)
            rows = cdf[i][idx[:, i]]
            idx[:, i + 1] = (u[:, None] > rows).sum(axis=1)
        out = PathEnsemble(model.states[idx], grid, seed, spec, state_index=idx)
    else:
        raise BadSpec(f"unknown path spec {type(spec).__name__}")
    out.paths.setflags(write=False)
    return out


def save_paths(ensemble: PathEnsemble, path: str) -> None:
    """CSV (``path_id, i, x_1..x_l``) or ``.npz`` depending on the suffix."""
    if str(path).endswith(".npz"):
        np.savez(path, paths=ensemble.paths, T=ensemble.grid.T, delta=ensemble.grid.delta, dt=ensemble.grid.dt,
                 seed=-1 if ensemble.seed is None else ensemble.seed)
        return
    M, N1, dim = ensemble.paths.shape
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path_id", "i"] + [f"x_{k + 1}" for k in range(dim)])
        for m in range(M):
            for i in range(N1):
                w.writerow([m, i] + [repr(float(v)) for v in ensemble.paths[m, i]])


def load_paths(path: str, grid: TimeGrid, seed=None) -> PathEnsemble:
    """Replay paths from disk. Adaptedness of replayed data is the caller's responsibility."""
    if str(path).endswith(".npz"):
        data = np.load(path)
        paths = data["paths"]
    else:
        raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        M = int(raw[:, 0].max()) + 1
        N1 = int(raw[:, 1].max()) + 1
        paths = np.empty((M, N1, raw.shape[1] - 2))
        paths[raw[:, 0].astype(int), raw[:, 1].astype(int)] = raw[:, 2:]
    if paths.shape[1] != grid.N + 1:
        raise BadSpec(f"paths have {paths.shape[1]} time points, grid needs {grid.N + 1}")
    paths.setflags(write=False)
    return PathEnsemble(paths, grid, seed, spec="replay")


# ---------------------------------------------------------------- regression

@dataclass(frozen=True)
class RegressionBasis:
    """Powers ``1..degree`` of each current coordinate, optionally the running
    reward ``sum_{j<i} g(t_j, X_j) dt`` of the uncontrolled path."""

    degree: int = 2
    running_reward: Callable | None = None

    def features(self, paths: np.ndarray, i: int, grid: TimeGrid) -> np.ndarray:
        x = paths[:, i, :]
        cols = [x ** q for q in range(1, self.degree + 1)]
        if self.running_reward is not None:
            acc = np.zeros(paths.shape[0])
            for j in range(i):
                acc += self.running_reward(grid.time(j), paths[:, j, :]) * grid.dt
            cols.append(acc[:, None])
        if not cols:
            return np.zeros((paths.shape[0], 0))
        return np.concatenate(cols, axis=1)

    def size(self, dim: int) -> int:
        return self.degree * dim + (self.running_reward is not None)


class _Design:
    """Standardized design at one index, factored once and reused for every target."""

    def __init__(self, raw: np.ndarray, ridge: float):
        mu = raw.mean(axis=0)
        sd = raw.std(axis=0)
        self.keep = sd > 1e-12 * (1.0 + np.abs(mu))
        self.mu = mu[self.keep]
        self.sd = sd[self.keep]
        X = self._matrix(raw)
        s = np.linalg.svd(X, compute_uv=False)
        self.cond = float(s[0] / s[-1]) if s[-1] > 0 else math.inf
        self.ridge_used = self.cond > COND_LIMIT
        if self.ridge_used:
            warnings.warn(f"design condition number {self.cond:.3g} exceeds {COND_LIMIT:g}; using ridge",
                          SingularDesignWarning, stacklevel=3)
            pen = np.full(X.shape[1], ridge)
            pen[0] = 0.0  # intercept is not penalized
            self.solver = np.linalg.solve(X.T @ X + np.diag(pen), X.T)
        else:
            self.solver = np.linalg.pinv(X)

    def _matrix(self, raw):
        z = (raw[:, self.keep] - self.mu) / self.sd
        return np.concatenate([np.ones((raw.shape[0], 1)), z], axis=1)

    def coef(self, y: np.ndarray) -> np.ndarray:
        return self.solver @ y

    def predict(self, raw: np.ndarray, coef: np.ndarray) -> np.ndarray:
        return self._matrix(raw) @ coef


@dataclass
class Predictor:
    basis: RegressionBasis
    index: int
    grid: TimeGrid
    design: _Design
    coef: np.ndarray

    @property
    def condition_number(self) -> float:
        return self.design.cond

    def __call__(self, paths: np.ndarray) -> np.ndarray:
        """Evaluate on paths ``(M, >= index+1, dim)``; only the prefix is read."""
        prefix = np.asarray(paths)[:, : self.index + 1]
        return self.design.predict(self.basis.features(prefix, self.index, self.grid), self.coef)


def fit_conditional_expectation(ensemble: PathEnsemble, targets: np.ndarray, basis: RegressionBasis, i: int,
                                *, ridge: float = 1e-8) -> Predictor:
    targets = np.asarray(targets, dtype=float)
    if targets.shape != (ensemble.M,) or not np.all(np.isfinite(targets)):
        raise ValueError("targets must be one finite value per path")
    raw = basis.features(ensemble.paths, i, ensemble.grid)
    design = _Design(raw, ridge)
    return Predictor(basis, i, ensemble.grid, design, design.coef(targets))


# ---------------------------------------------------------------- solver

@dataclass
class LSMCRule:
    """Fitted rule. ``stop_coef[(n, a, i)]`` holds obstacle minus continuation
    coefficients; ``value_coef[(n, a, k)]`` predicts the level ``n`` value used
    to pick the size when an impulse decided at level ``n + 1`` executes."""

    grid: TimeGrid
    menu: ImpulseMenu
    lattice: CumulativeLattice
    levels: int
    basis: RegressionBasis
    designs: list
    stop_coef: dict = field(default_factory=dict)
    value_coef: dict = field(default_factory=dict)
    fit_seed: object = None

    def _features(self, paths, i):
        return self.basis.features(paths, i, self.grid)

    def stop_score(self, n, a, i, raw) -> np.ndarray:
        return self.designs[i].predict(raw, self.stop_coef[(n, a, i)])

    def choose_size(self, n, a, k, raw) -> np.ndarray:
        """Menu index maximizing ``-psi_j + Yhat^{n-1}_k(a + a_j)`` (lowest index on ties)."""
        kids = self.lattice.children[a]
        scores = np.stack([-self.menu.costs[j] + self.designs[k].predict(raw, self.value_coef[(n - 1, kids[j], k)])
                           for j in range(self.menu.p)])
        return np.argmax(scores, axis=0)

    def to_lattice_rule(self, model: MarkovLattice) -> StrategyRule:
        """Tabulate the fitted rule on a finite chain (features must depend on the current state only)."""
        if self.basis.running_reward is not None:
            raise ValueError("running-reward features are path dependent and cannot be tabulated")
        N, S, V = self.grid.N, model.S, len(self.lattice)
        shape = (self.levels + 1, V, N + 1, S)
        stop = np.zeros(shape, dtype=bool)
        size = np.full(shape, -1, dtype=np.int64)
        pseudo = np.repeat(model.states[:, None, :], N + 1, axis=1)  # every state at every index
        for i in range(N + 1):
            raw = self._features(pseudo, i)
            for n in range(1, self.levels + 1):
                for a in range(V):
                    if (n, a, i) in self.stop_coef:
                        stop[n, a, i] = self.stop_score(n, a, i, raw) >= 0
                    if i >= self.grid.d and all((n - 1, c, i) in self.value_coef for c in self.lattice.children[a]):
                        size[n, a, i] = self.choose_size(n, a, i, raw)
        return StrategyRule(stop=stop, size=size, meta={"source": "lsmc"})


@dataclass
class LSMCReport:
    value_insample: float
    stderr: float
    level_values: list
    rule: LSMCRule | None
    seed: object
    basis: RegressionBasis
    diagnostics: dict

    def to_json(self) -> dict:
        return {"value_insample": self.value_insample, "stderr": self.stderr, "seeds": {"fit": self.seed},
                "basis": {"degree": self.basis.degree, "running_reward": self.basis.running_reward is not None},
                "level_values": self.level_values, "diagnostics": self.diagnostics}


def _path_rewards(ensemble, reward, lattice):
    """``(V, M, N)`` of ``g(t_i, X_i + a) dt``."""
    grid = ensemble.grid
    out = np.empty((len(lattice), ensemble.M, grid.N))
    for a, av in enumerate(lattice.values):
        for i in range(grid.N):
            out[a, :, i] = reward(grid.time(i), ensemble.paths[:, i, :] + av)
    return out * grid.dt


def lsmc_solve(ensemble: PathEnsemble, menu: ImpulseMenu, reward: Callable, *, basis: RegressionBasis | None = None,
               max_impulses: int | None = None, ridge: float = 1e-8) -> LSMCReport:
    grid = ensemble.grid
    N, d, M = grid.N, grid.d, ensemble.M
    basis = basis or RegressionBasis()
    if M < 10 * (basis.size(ensemble.dim) + 1):
        raise BadSpec(f"{M} paths are too few for {basis.size(ensemble.dim) + 1} regressors")
    L = grid.max_impulses if max_impulses is None else int(max_impulses)
    lattice = build_cumulative_lattice(menu, L)
    V = len(lattice)
    rew = _path_rewards(ensemble, reward, lattice)
    raws = [basis.features(ensemble.paths, i, grid) for i in range(N + 1)]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", SingularDesignWarning)
        designs = [_Design(raw, ridge) for raw in raws]
    for w in caught:
        warnings.warn(w.message, w.category, stacklevel=2)
    rule = LSMCRule(grid, menu, lattice, L, basis, designs, fit_seed=ensemble.seed)

    # realized values at level 0: remaining reward without impulses
    prev = np.zeros((V, N + 1, M))
    prev[:, :N] = np.cumsum(rew[:, :, ::-1], axis=2)[:, :, ::-1].transpose(0, 2, 1)
    level_values = [float(prev[lattice.root, 0].mean())]
    top = prev[lattice.root, 0]

    def fit_values(level, field_, active):
        for a in active:
            for k in range(d, N + 1):
                rule.value_coef[(level, a, k)] = designs[k].coef(field_[a, k])

    fit_values(0, prev, np.flatnonzero(lattice.depth <= L))
    for n in range(1, L + 1):
        cur = np.full((V, N + 1, M), np.nan)
        active = np.flatnonzero(lattice.depth <= L - n)
        for a in active:
            kids = lattice.children[a]
            r = rew[a]
            # realized execution value at every k >= d
            X = np.full((N + 1, M), np.nan)
            for k in range(d, N + 1):
                j = rule.choose_size(n, a, k, raws[k])
                X[k] = -menu.costs[j] + prev[kids[j], k, np.arange(M)]
            Vn = np.zeros(M)
            cur[a, N] = 0.0
            for i in range(N - 1, -1, -1):
                cont = r[:, i] + Vn
                if i < N - d:
                    obst = r[:, i:i + d].sum(axis=1) + X[i + d]
                    coef = designs[i].coef(obst) - designs[i].coef(cont)
                    rule.stop_coef[(n, a, i)] = coef
                    stop = designs[i].predict(raws[i], coef) >= 0
                    Vn = np.where(stop, obst, cont)
                else:
                    Vn = cont
                cur[a, i] = Vn
        if n < L:
            fit_values(n, cur, active)
        prev = cur
        top = cur[lattice.root, 0]
        level_values.append(float(top.mean()))
    diag = {"max_condition": max(dz.cond for dz in designs), "ridge_indices": [i for i, dz in enumerate(designs)
                                                                             if dz.ridge_used]}
    return LSMCReport(value_insample=float(top.mean()), stderr=float(top.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0,
                      level_values=level_values, rule=rule if L > 0 else None, seed=ensemble.seed, basis=basis,
                      diagnostics=diag)


# ---------------------------------------------------------------- out of sample

@dataclass
class SimulationResult:
    mean: float
    stderr: float
    ci95: tuple
    payoffs: np.ndarray
    traces: list | None = None


def simulate_strategy_payoff(rule: LSMCRule | None, ensemble: PathEnsemble, reward: Callable, *,
                             record: bool = False) -> SimulationResult:
    """Run ``rule`` along every path of ``ensemble`` and average the realized payoff.

    ``rule=None`` runs the no-impulse strategy. With ``record`` the
    per-path ``(decision times, sizes)`` traces are returned too.
    """
    grid = ensemble.grid
    N, d, M = grid.N, grid.d, ensemble.M
    if rule is not None and rule.fit_seed is not None and rule.fit_seed == ensemble.seed:
        warnings.warn("evaluation paths share the fitting seed; the estimate is not out of sample",
                      SeedCollisionWarning, stacklevel=2)
    if rule is None:
        lattice_vals = np.zeros((1, ensemble.dim))
        children = None
        L = 0
    else:
        lattice_vals = rule.lattice.values
        children = rule.lattice.children
        L = rule.levels
    m = np.full(M, L)
    a = np.zeros(M, dtype=np.int64)
    exec_at = np.full(M, -1)
    payoff = np.zeros(M)
    traces = [[] for _ in range(M)] if record else None
    for i in range(N + 1):
        if rule is not None:
            raw = rule._features(ensemble.paths, i)
            due = np.flatnonzero(exec_at == i)
            for mm, aa in set(zip(m[due].tolist(), a[due].tolist())):
                sel = due[(m[due] == mm) & (a[due] == aa)]
                j = rule.choose_size(mm, aa, i, raw[sel])
                a[sel] = children[aa, j]
                m[sel] -= 1
                exec_at[sel] = -1
                # every decision precedes N - d, so its cost is always charged
                payoff[sel] -= rule.menu.costs[j]
                if record:
                    for p, jj in zip(sel, j):
                        traces[p][-1] = (traces[p][-1][0], int(jj))
            if i < N - d:
                free = np.flatnonzero((exec_at < 0) & (m > 0))
                for mm, aa in set(zip(m[free].tolist(), a[free].tolist())):
                    sel = free[(m[free] == mm) & (a[free] == aa)]
                    go = sel[rule.stop_score(mm, aa, i, raw[sel]) >= 0]
                    exec_at[go] = i + d
                    if record:
                        for p in go:
                            traces[p].append((i, None))
        if i == N:
            break
        x = ensemble.paths[:, i, :] + lattice_vals[a]
        payoff += reward(grid.time(i), x) * grid.dt
    mean = float(payoff.mean())
    se = float(payoff.std(ddof=1) / math.sqrt(M)) if M > 1 else 0.0
    return SimulationResult(mean, se, (mean - 1.96 * se, mean + 1.96 * se), payoff, traces)
