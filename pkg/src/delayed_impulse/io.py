"""JSON model files, report and CSV writers, and the strategy loader."""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict

import jsonschema
import numpy as np

from .errors import BadSpec
from .model import (ImpulseMenu, LinearLevelReward, MarkovLattice, StrategyRule, TableReward,
                    build_cumulative_lattice, build_time_grid)
from .swing import LayeredReward, SwingConfig

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_mat = {"type": "array", "items": _vec, "minItems": 1}

MODEL_SCHEMA = {
    "type": "object",
    "required": ["schema", "grid", "states", "kernels", "menu", "reward"],
    "properties": {
        "schema": {"const": 1},
        "grid": {
            "type": "object",
            "required": ["delta", "dt"],
            "properties": {"T": _num, "delta": _num, "dt": _num},
            "additionalProperties": False,
        },
        "states": {"oneOf": [_vec, _mat]},
        "kernels": {"oneOf": [_mat, {"type": "array", "items": _mat, "minItems": 1}]},
        "menu": {
            "type": "object",
            "required": ["items", "costs"],
            "properties": {"items": {"oneOf": [_vec, _mat]}, "costs": _vec},
            "additionalProperties": False,
        },
        "reward": {
            "type": "object",
            "required": ["kind", "params"],
            "properties": {
                "kind": {"enum": ["table", "linear_level", "swing"]},
                "params": {"type": "object"},
            },
            "additionalProperties": False,
        },
        "initial_state": {"type": "integer", "minimum": 0},
        "initial_distribution": _vec,
        "theta": _num,
        "max_impulses": {"type": "integer", "minimum": 0},
        "gamma_bound": _num,
        "discount": {
            "type": "object",
            "required": ["rate"],
            "properties": {"rate": _num, "epsilon": _num, "epsilon_fix": _num, "n_max": {"type": "integer"}},
            "additionalProperties": False,
        },
    },
    "not": {"required": ["initial_state", "initial_distribution"]},
    "additionalProperties": False,
}

SWING_SCHEMA = {
    "type": "object",
    "required": ["schema", "swing"],
    "properties": {
        "schema": {"const": 1},
        "swing": {
            "type": "object",
            "required": ["s0", "sigma", "T", "refraction", "dt", "strikes", "rights"],
            "properties": {
                "s0": _num, "sigma": _num, "mu": _num, "T": _num, "refraction": _num, "dt": _num,
                "strikes": _vec, "rights": {"type": "integer", "minimum": 0},
                "volumes": _vec, "costs": _vec,
            },
            "additionalProperties": False,
        },
    },
    "additionalProperties": False,
}


class ConfigError(BadSpec):
    """Config failed to parse or validate; ``str()`` carries a line hint."""


def _line_of(text: str, path) -> int | None:
    # best effort: first line mentioning the deepest string key of the error path
    keys = [p for p in path if isinstance(p, str)]
    if not keys:
        return None
    needle = f'"{keys[-1]}"'
    for n, line in enumerate(text.splitlines(), 1):
        if needle in line:
            return n
    return None


def read_config(path: str, schema: dict) -> dict:
    with open(path) as fh:
        text = fh.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}:{e.lineno}:{e.colno}: {e.msg}") from e
    errors = sorted(jsonschema.Draft202012Validator(schema).iter_errors(doc), key=lambda e: list(e.path))
    if errors:
        lines = []
        for e in errors:
            where = "/".join(str(p) for p in e.path) or "<root>"
            ln = _line_of(text, list(e.path))
            lines.append(f"{path}:{ln if ln else '?'}: at {where}: {e.message}")
        raise ConfigError("\n".join(lines))
    return doc


def _menu(doc) -> ImpulseMenu:
    return ImpulseMenu(doc["menu"]["items"], doc["menu"]["costs"])


def _initial(doc):
    if "initial_distribution" in doc:
        return doc["initial_distribution"]
    return doc.get("initial_state")


def build_reward(doc, menu, grid, levels):
    kind, params = doc["reward"]["kind"], doc["reward"]["params"]
    if kind == "linear_level":
        return LinearLevelReward(params["coef"])
    if kind == "swing":
        return LayeredReward(params["strikes"])
    lattice = build_cumulative_lattice(menu, levels)
    return TableReward(params["values"], doc["states"], lattice, grid.dt)


def load_model(doc: dict):
    """``(MarkovLattice, ImpulseMenu)`` for a finite-horizon document."""
    g = doc["grid"]
    if "T" not in g:
        raise ConfigError("grid.T is required for a finite horizon")
    grid = build_time_grid(g["T"], g["delta"], g["dt"])
    menu = _menu(doc)
    levels = doc.get("max_impulses", grid.max_impulses)
    reward = build_reward(doc, menu, grid, levels)
    kernels = np.asarray(doc["kernels"], dtype=float)
    if kernels.ndim == 3 and kernels.shape[0] == 1:
        kernels = kernels[0]
    model = MarkovLattice(grid, doc["states"], kernels, reward, initial=_initial(doc),
                          gamma_bound=doc.get("gamma_bound"))
    return model, menu


def load_discounted(doc: dict):
    from .infinite_rn import DiscountedModel

    if "discount" not in doc:
        raise ConfigError("infinite horizon needs a 'discount' block with a rate")
    if doc["reward"]["kind"] == "table":
        raise ConfigError("table rewards are tied to a finite grid; use linear_level or swing for the infinite horizon")
    kernels = np.asarray(doc["kernels"], dtype=float)
    if kernels.ndim == 3:
        if not np.all(kernels == kernels[0]):
            raise ConfigError("infinite horizon needs a time-homogeneous kernel")
        kernels = kernels[0]
    menu = _menu(doc)
    reward = build_reward(doc, menu, None, 0)
    dm = DiscountedModel(states=doc["states"], kernel=kernels, reward=reward, rate=doc["discount"]["rate"],
                         delta=doc["grid"]["delta"], dt=doc["grid"]["dt"], initial=_initial(doc),
                         gamma_bound=doc.get("gamma_bound"))
    return dm, menu


def load_swing(doc: dict) -> SwingConfig:
    return SwingConfig(**doc["swing"])


def model_to_config(model: MarkovLattice, menu: ImpulseMenu, levels: int | None = None) -> dict:
    """Serialize any lattice model with a tabulated reward (exact round trip)."""
    grid = model.grid
    levels = grid.max_impulses if levels is None else levels
    lattice = build_cumulative_lattice(menu, levels)
    table = model.reward_tensor(lattice).transpose(1, 2, 0)  # (N, S, V)
    return {
        "schema": 1,
        "grid": {"T": grid.T, "delta": grid.delta, "dt": grid.dt},
        "states": model.states.tolist(),
        "kernels": np.asarray(model.kernels).tolist(),
        "menu": {"items": menu.items.tolist(), "costs": menu.costs.tolist()},
        "reward": {"kind": "table", "params": {"values": table.tolist()}},
        "initial_distribution": model.initial.tolist(),
        "max_impulses": levels,
    }


# ---------------------------------------------------------------- outputs

def _f(x) -> str:
    return repr(float(x))


def write_report(out_dir: str, payload: dict) -> str:
    os.makedirs(out_dir, exist_ok=True)
    path = os.path.join(out_dir, "report.json")
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2, default=_jsonable)
    return path


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, np.generic):
        return o.item()
    if hasattr(o, "__dataclass_fields__"):
        return asdict(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")


def write_fields(out_dir: str, Y: np.ndarray, O: np.ndarray, model, level_ids=None) -> str:
    """``Y``/``O`` of shape ``(levels, V, N+1, S)``; NaN entries (unreached) are skipped."""
    path = os.path.join(out_dir, "fields.csv")
    level_ids = range(Y.shape[0]) if level_ids is None else level_ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "a_id", "i", "state", "Y", "O"])
        for n, lev in enumerate(level_ids):
            for a in range(Y.shape[1]):
                if np.isnan(Y[n, a]).all():
                    continue
                for i in range(Y.shape[2]):
                    for s in range(Y.shape[3]):
                        o = O[n, a, i, s]
                        w.writerow([lev, a, i, s, _f(Y[n, a, i, s]), "" if np.isnan(o) else _f(o)])
    return path


def write_strategy(out_dir: str, rule: StrategyRule, model) -> str:
    """One row per (level, a_id, time, state): ``action`` is 1 to decide an
    impulse there, ``size`` the menu index executed there (-1 if none)."""
    path = os.path.join(out_dir, "strategy.csv")
    grid = model.grid
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["level", "a_id", "time", "state", "action", "size"])
        L, V, N1, S = rule.stop.shape
        for n in range(L):
            for a in range(V):
                for i in range(N1):
                    for s in range(S):
                        w.writerow([n, a, _f(grid.time(i)), s, int(rule.stop[n, a, i, s]), int(rule.size[n, a, i, s])])
    return path


def load_strategy(path: str, grid, n_lattice: int, S: int, *, stationary: bool = False, mode: str = "risk-neutral"):
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    L = int(raw[:, 0].max()) + 1
    stop = np.zeros((L, n_lattice, grid.N + 1, S), dtype=bool)
    size = np.full(stop.shape, -1, dtype=np.int64)
    n = raw[:, 0].astype(int)
    a = raw[:, 1].astype(int)
    i = np.rint(raw[:, 2] / grid.dt).astype(int)
    s = raw[:, 3].astype(int)
    stop[n, a, i, s] = raw[:, 4] != 0
    size[n, a, i, s] = raw[:, 5].astype(int)
    return StrategyRule(stop=stop, size=size, stationary=stationary, mode=mode)
