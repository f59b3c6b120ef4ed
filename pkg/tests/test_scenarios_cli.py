import csv
import dataclasses
import json

import numpy as np
import pytest

from gklab import __version__
from gklab.cli import main
from gklab.model_space import ConvergenceError
from gklab.report import Check, ScenarioReport, emit_report
from gklab.scenarios import (CATALOG, WORKERS_ENV, ConfigError, NumericalFailure, default_config,
                             list_scenarios, load_config, run_scenario)


def _write(tmp_path, doc, name="cfg.json"):
    path = tmp_path / name
    path.write_text(doc if isinstance(doc, str) else json.dumps(doc))
    return str(path)


def _cfg(tmp_path, name="sphere_euclidean", **numerics):
    d = default_config(name, seed=3)
    d["numerics"].update(numerics)
    return _write(tmp_path, d)


def test_list_and_version(capsys):
    assert main(["list"]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == len(list_scenarios()) == 11
    names = [ln.split()[0] for ln in lines]
    assert {"comparison_identity", "n3_estimates", "mixed_term_bound"} <= set(names)
    assert main(["version"]) == 0
    assert capsys.readouterr().out.strip() == __version__


def test_every_default_config_validates():
    for name in CATALOG:
        cfg = load_config(default_config(name, seed=7))
        assert cfg.numerics.seed == 7 and cfg.scenario == name


def test_config_subcommand_round_trips(capsys):
    assert main(["config", "nested_hulls", "--seed", "5"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert load_config(doc).numerics.seed == 5
    assert main(["config", "nope"]) == 2


@pytest.mark.parametrize("mutate", [
    lambda d: d.update(extra=1),
    lambda d: d["numerics"].pop("seed"),
    lambda d: d["numerics"].update(tolerances={"bogus": 1.0}),
    lambda d: d["numerics"].update(seed="zero"),
    lambda d: d.update(schema_version=2),
    lambda d: d["space"].update(n=5),
    lambda d: d.update(scenario="other"),
])
def test_invalid_configs_exit_2(tmp_path, mutate):
    d = default_config("sphere_euclidean", seed=0)
    mutate(d)
    assert main(["run", "sphere_euclidean", "--config", _write(tmp_path, d),
                 "--out", str(tmp_path / "o")]) == 2


def test_bad_json_and_missing_output(tmp_path):
    assert main(["run", "sphere_euclidean", "--config", _write(tmp_path, "{not json"),
                 "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "sphere_euclidean", "--config", _cfg(tmp_path)]) == 2


def test_partial_tolerance_override_keeps_the_rest():
    d = default_config("mixed_term_bound", seed=0)
    d["numerics"]["tolerances"] = {"spread": 0.5}
    cfg = load_config(d)
    assert cfg.tol("spread") == 0.5 and cfg.tol("inside") == 1e-8


def test_run_writes_report_and_csv(tmp_path, capsys):
    out = tmp_path / "out"
    assert main(["run", "sphere_euclidean", "--config", _cfg(tmp_path), "--out", str(out)]) == 0
    assert "PASS" in capsys.readouterr().out
    rep = json.loads((out / "report.json").read_text())
    assert rep["passed"] is True and rep["scenario"] == "sphere_euclidean"
    assert rep["tool_version"] == __version__
    assert rep["config"]["numerics"]["seed"] == 3 and "output" not in rep["config"]
    rows = list(csv.reader(open(out / "spheres.csv", newline="")))
    assert len(rows) == 1 + len(rep["tables"]["spheres"]["rows"])
    assert "timing" not in rep and json.loads((out / "timing.json").read_text())


def test_output_field_in_config(tmp_path):
    d = default_config("sphere_euclidean", seed=0)
    d["output"] = str(tmp_path / "from_cfg")
    assert main(["run", "sphere_euclidean", "--config", _write(tmp_path, d), "--quiet"]) == 0
    assert (tmp_path / "from_cfg" / "report.json").exists()


def test_failing_check_exits_1(tmp_path):
    cfg = _cfg(tmp_path, "mixed_term_bound", samples=50)
    assert main(["run", "mixed_term_bound", "--config", cfg, "--out", str(tmp_path / "o")]) == 1
    rep = json.loads((tmp_path / "o" / "report.json").read_text())
    assert rep["passed"] is False


def test_numerical_failure_exits_3(tmp_path, monkeypatch, capsys):
    def boom(cfg, rep):
        raise ConvergenceError("shooting did not converge", 1.0)

    monkeypatch.setitem(CATALOG, "sphere_euclidean", dataclasses.replace(CATALOG["sphere_euclidean"], run=boom))
    with pytest.raises(NumericalFailure):
        run_scenario(load_config(default_config("sphere_euclidean")))
    assert main(["run", "sphere_euclidean", "--config", _cfg(tmp_path), "--out", str(tmp_path / "o")]) == 3
    assert "numerical failure" in capsys.readouterr().err


def test_unwritable_output_exits_4(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert main(["run", "sphere_euclidean", "--config", _cfg(tmp_path), "--out", str(blocker)]) == 4
    assert main(["run", "sphere_euclidean", "--config", str(tmp_path / "missing.json"),
                 "--out", str(tmp_path / "o")]) == 4


def test_reports_are_deterministic_and_seed_sensitive(tmp_path):
    blobs = []
    for k, seed in enumerate([1, 1, 2]):
        d = default_config("nonexpansive_maps", seed=seed)
        d["numerics"]["pairs"] = 200
        emit_report(run_scenario(load_config(d)), tmp_path / str(k))
        blobs.append((tmp_path / str(k) / "report.json").read_bytes())
    assert blobs[0] == blobs[1]
    assert blobs[0] != blobs[2]


def test_worker_count_does_not_change_results(tmp_path, monkeypatch):
    d = default_config("n3_estimates", seed=0)
    d["numerics"]["samples"] = 300
    cfg = load_config(d)
    monkeypatch.setenv(WORKERS_ENV, "1")
    a = run_scenario(cfg).to_json()
    monkeypatch.setenv(WORKERS_ENV, "4")
    assert run_scenario(cfg).to_json() == a
    monkeypatch.setenv(WORKERS_ENV, "zero")
    with pytest.raises(ConfigError):
        run_scenario(cfg)


def test_report_json_is_strict():
    rep = ScenarioReport("x", "0", {})
    rep.check("c", True, value=float("inf"))
    rep.value("v", np.float64(np.nan))
    doc = json.loads(rep.to_json())
    assert doc["values"]["v"] == "nan" and doc["checks"][0]["value"] == "inf"
    assert ScenarioReport("y", "0", {}, checks=[Check("a", False)]).passed is False
