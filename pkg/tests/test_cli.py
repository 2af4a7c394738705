import json
import math
from pathlib import Path

import pytest

from delayed_impulse import cli, io
from delayed_impulse.fixtures import D2_VALUE, r3
from delayed_impulse.infinite_rn import inf_evaluate_strategy, inf_iterate
from delayed_impulse.lattice_rn import evaluate_strategy_exact
from delayed_impulse.lattice_rs import rs_evaluate_strategy_exact
from delayed_impulse.model import build_cumulative_lattice

CONFIGS = Path(__file__).resolve().parent.parent / "configs"


def _report(out):
    return json.loads((out / "report.json").read_text())


def test_solve_d1_both_modes(tmp_path):
    assert cli.main(["solve", str(CONFIGS / "d1.json"), "--mode", "rn", "--out", str(tmp_path / "rn")]) == 0
    assert cli.main(["solve", str(CONFIGS / "d1.json"), "--mode", "rs", "--out", str(tmp_path / "rs")]) == 0
    assert _report(tmp_path / "rn")["value"] == pytest.approx(0.6, abs=1e-12)
    rs = _report(tmp_path / "rs")
    assert rs["value"] == pytest.approx(math.exp(0.6), abs=1e-12)
    assert rs["mode"] == "risk-sensitive" and rs["log_space"] is False


def test_solve_d2_infinite(tmp_path):
    assert cli.main(["solve", str(CONFIGS / "d2.json"), "--mode", "inf", "--out", str(tmp_path)]) == 0
    rep = _report(tmp_path)
    assert abs(rep["value"] - D2_VALUE) <= 1e-8 + 2 * rep["tail_bound"]
    assert {"T_trunc", "tail_bound", "iterations", "residuals"} <= rep.keys()


@pytest.mark.parametrize("mode", ["rn", "rs"])
def test_strategy_file_round_trip(tmp_path, mode):
    cfg = CONFIGS / "r3.json"
    assert cli.main(["solve", str(cfg), "--mode", mode, "--out", str(tmp_path)]) == 0
    model, menu = io.load_model(io.read_config(str(cfg), io.MODEL_SCHEMA))
    lat = build_cumulative_lattice(menu, model.grid.max_impulses)
    rule = io.load_strategy(str(tmp_path / "strategy.csv"), model.grid, len(lat), model.S)
    if mode == "rs":
        J = rs_evaluate_strategy_exact(rule, model, menu, lat)
    else:
        J = evaluate_strategy_exact(rule, model, menu, lat)
    assert J == pytest.approx(_report(tmp_path)["value"], rel=1e-10, abs=1e-10)


def test_strategy_file_round_trip_infinite(tmp_path):
    cfg = CONFIGS / "d2.json"
    assert cli.main(["solve", str(cfg), "--mode", "inf", "--out", str(tmp_path)]) == 0
    dm, menu = io.load_discounted(io.read_config(str(cfg), io.MODEL_SCHEMA))
    rep = inf_iterate(dm, menu)
    rule = io.load_strategy(str(tmp_path / "strategy.csv"), rep.model.grid, len(rep.lattice), 1, stationary=True,
                            mode="discounted")
    value = _report(tmp_path)["value"]
    assert abs(inf_evaluate_strategy(rule, rep) - value) <= 1e-8 + rep.tail_bound


def test_r3_config_reproduces_fixture():
    model, menu = r3()
    back, back_menu = io.load_model(io.read_config(str(CONFIGS / "r3.json"), io.MODEL_SCHEMA))
    lat = build_cumulative_lattice(menu, model.grid.max_impulses)
    assert (back.reward_tensor(lat) == model.reward_tensor(lat)).all()
    assert (back.kernels == model.kernels).all() and (back_menu.costs == menu.costs).all()


def test_schema_error_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{\n  "schema": 1,\n  "grid": {"T": 1, "delta": "x", "dt": 0.1},\n  "states": [[0]]\n}\n')
    assert cli.main(["solve", str(bad)]) == 2
    err = capsys.readouterr().err
    assert "bad.json:3:" in err and "grid/delta" in err


def test_malformed_json_exit_code(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text('{"schema": 1,\n "grid": }')
    assert cli.main(["solve", str(bad)]) == 2
    assert "bad.json:2:" in capsys.readouterr().err


def test_solver_error_exit_code(tmp_path, capsys):
    doc = json.loads((CONFIGS / "d1.json").read_text())
    doc["grid"]["delta"] = 0.33
    f = tmp_path / "odd.json"
    f.write_text(json.dumps(doc))
    assert cli.main(["solve", str(f), "--out", str(tmp_path)]) == 3
    assert "NonCommensurate" in capsys.readouterr().err


def test_price_swing_outputs(tmp_path):
    assert cli.main(["price-swing", str(CONFIGS / "swing.json"), "--out", str(tmp_path)]) == 0
    assert _report(tmp_path)["price"] > 0
    head = (tmp_path / "boundary.csv").read_text().splitlines()[0]
    assert head == "time,rights_left,volume,spot_threshold"


def test_simulate_outputs(tmp_path):
    args = ["simulate", str(CONFIGS / "r3.json"), "--paths", "4000", "--seed", "3", "--out", str(tmp_path)]
    assert cli.main(args + ["--save-paths"]) == 0
    res = json.loads((tmp_path / "lsmc.json").read_text())
    assert {"value_insample", "value_oos", "stderr", "seeds", "basis"} <= res.keys()
    assert (tmp_path / "paths.csv").exists()
    assert cli.main(args) == 0
    assert json.loads((tmp_path / "lsmc.json").read_text()) == res


def test_verify_oracle_suite(tmp_path):
    assert cli.main(["verify", "--suite", "oracle", "--out", str(tmp_path)]) == 0
    rows = json.loads((tmp_path / "verify.json").read_text())["results"]
    assert rows and all(r["passed"] for r in rows)
