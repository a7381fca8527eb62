import json
import subprocess
import sys

import pytest

from conftest import CONFIGS, SHIPPED
from credithedge.cli import EXIT_FAIL, EXIT_INVALID, EXIT_OK, main
from credithedge.config import RunConfig, load_config
from credithedge.model import ValidationError


def minimal(**over):
    d = {"schema_version": 1,
         "model": {"T": 1.0, "ordered_defaults": True,
                   "states": {"00": {"mu": 0.05, "sigma": 0.2, "sigmaA": -0.3, "lambdaA": 0.2},
                              "10": {"mu": 0.03, "sigma": 0.2, "sigmaB": -0.2, "lambdaB": 0.1},
                              "11": {"mu": 0.02, "sigma": 0.2}}},
         "claim": {"form": "restricted", "g": {"kind": "capped_call", "strike": 1.0, "cap": 0.5},
                   "f": {"kind": "constant", "value": 0.2}},
         "x0": 0.2,
         "grids": {"n_time": 20, "n_space": 41},
         "mc": {"n_paths": 10, "seed": 3}}
    d.update(over)
    return d


def write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(json.dumps(doc))
    return str(path)


def run(capsys, *argv):
    status = main(list(argv))
    return status, json.loads(capsys.readouterr().out)


# ---------------------------------------------------------------- config


@pytest.mark.parametrize("path", SHIPPED, ids=lambda p: p.stem)
def test_shipped_configs_round_trip(path):
    cfg = load_config(path)
    again = RunConfig.from_dict(json.loads(cfg.dumps()))
    assert again.to_dict() == cfg.to_dict()


def test_schema_version_is_mandatory():
    doc = minimal()
    del doc["schema_version"]
    with pytest.raises(ValidationError, match="schema_version"):
        RunConfig.from_dict(doc)
    with pytest.raises(ValidationError, match="unsupported"):
        RunConfig.from_dict(minimal(schema_version=2))


def test_unknown_keys_are_rejected():
    with pytest.raises(ValidationError, match="unknown key"):
        RunConfig.from_dict(minimal(mc={"n_paths": 10, "sead": 3}))


def test_floats_keep_full_precision():
    doc = minimal(x0=0.1 + 0.2)
    assert RunConfig.from_dict(json.loads(RunConfig.from_dict(doc).dumps())).x0 == 0.1 + 0.2


def test_overrides():
    cfg = RunConfig.from_dict(minimal()).with_overrides(seed=99, paths=7)
    assert (cfg.seed, cfg.n_paths) == (99, 7)


# ------------------------------------------------------------------- cli


def test_simulate_writes_requested_paths(tmp_path, capsys):
    cfg = write(tmp_path, minimal())
    status, doc = run(capsys, "simulate", "--config", cfg, "--out", str(tmp_path / "a"))
    assert status == EXIT_OK and doc["status"] == "ok"
    rows = (tmp_path / "a" / "paths.csv").read_text().splitlines()
    assert rows[0] == "path_id,step,t,dW,bond,hA,hB"
    assert {r.split(",")[0] for r in rows[1:]} == {str(i) for i in range(10)}
    assert doc["resolved_config"]["mc"]["seed"] == 3


def test_simulate_is_byte_identical_for_a_fixed_seed(tmp_path, capsys):
    cfg = write(tmp_path, minimal())
    for sub in ("a", "b"):
        run(capsys, "simulate", "--config", cfg, "--out", str(tmp_path / sub), "--paths", "300")
    assert (tmp_path / "a" / "paths.csv").read_bytes() == (tmp_path / "b" / "paths.csv").read_bytes()
    run(capsys, "simulate", "--config", cfg, "--out", str(tmp_path / "c"), "--paths", "300", "--seed", "4")
    assert (tmp_path / "c" / "paths.csv").read_bytes() != (tmp_path / "a" / "paths.csv").read_bytes()


def test_bad_jump_size_is_a_validation_failure(tmp_path, capsys):
    doc = minimal()
    doc["model"]["states"]["00"]["sigmaA"] = -1.2
    status, out = run(capsys, "verify", "--config", write(tmp_path, doc))
    assert status == EXIT_INVALID
    assert out["status"] == "validation failure" and "bond positivity violated" in out["error"]


def test_missing_config_is_a_validation_failure(tmp_path, capsys):
    status, out = run(capsys, "simulate", "--config", str(tmp_path / "nope.json"))
    assert status == EXIT_INVALID and out["status"] == "validation failure"


def test_price_and_hedge_commands(tmp_path, capsys):
    cfg = write(tmp_path, minimal())
    status, doc = run(capsys, "price-indifference", "--config", cfg, "--out", str(tmp_path))
    assert status == EXIT_OK and 0 < doc["price"] < 0.5
    assert (tmp_path / "hjb_surface.csv").exists()
    status, doc = run(capsys, "hedge-mvh", "--config", cfg, "--out", str(tmp_path), "--paths", "2000")
    assert status in (EXIT_OK, EXIT_FAIL)
    assert {"theta0", "y0", "xi0", "value", "mc_value", "mc_stderr", "n_paths", "seed"} <= set(doc)
    assert doc["n_paths"] == 2000
    assert (tmp_path / "mvh_surface.csv").exists()


def test_oracles_command_on_single_default_config(capsys, tmp_path):
    status, doc = run(capsys, "oracles", "--config", str(CONFIGS / "single_default.json"), "--out", str(tmp_path))
    assert status == EXIT_OK
    names = {r["check_name"]: r for r in doc["checks"]}
    assert names["single_default_oracle_ode"]["pass"] and names["single_default_oracle_pde"]["pass"]


def test_verify_without_statistics(tmp_path, capsys):
    cfg = write(tmp_path, minimal(verify={"statistical": False}, grids={"n_time": 100, "n_space": 201}))
    status, doc = run(capsys, "verify", "--config", cfg, "--out", str(tmp_path))
    assert status == EXIT_OK, doc["failed"]
    assert doc["n_fail"] == 0 and doc["n_pass"] > 10


def test_module_entry_point(tmp_path):
    cfg = write(tmp_path, minimal())
    proc = subprocess.run([sys.executable, "-m", "credithedge", "simulate", "--config", cfg,
                           "--out", str(tmp_path)], capture_output=True, text=True)
    assert proc.returncode == 0
    assert json.loads(proc.stdout)["n_paths"] == 10
