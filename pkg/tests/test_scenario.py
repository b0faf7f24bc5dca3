import json
import math
import pytest
import app
from config.scenario_config import SCHEMA_PATH, ScenarioConfig, load_config, parse_config, schema, write_schema
from services.scenario_service import build_problem, run_scenario, validate_config
from utils.errors import ConfigError

def _write(tmp_path, document, name="scenario.json"):
    path = tmp_path / name
    path.write_text(json.dumps(document))
    return path

def _with_output(config: ScenarioConfig, directory) -> ScenarioConfig:
    return config.model_copy(update={"outputs": config.outputs.model_copy(update={"directory": str(directory)})})

def test_builtin_scenarios_parse(scenarios_dir):
    names = sorted(p.name for p in scenarios_dir.glob("*.json"))
    assert "t2_constants.json" in names
    for path in scenarios_dir.glob("*.json"):
        config = load_config(path)
        assert len(config.alpha) == config.manifold.dim

def test_parse_errors_carry_line_and_column():
    with pytest.raises(ConfigError, match=r"cfg.json:2:\d+"):
        parse_config('{"scenario": "orbits",\n  "class": [0, 0,]}', "cfg.json")

def test_schema_violations_point_at_the_key():
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps({"scenario": "orbits", "manifold": {"dim": 2, "metrc": "flat"}}))
    assert info.value.pointer == "/manifold/metrc"
    with pytest.raises(ConfigError) as info:
        parse_config(json.dumps({"scenario": "orbits", "solver": {"seeds": 0}}))
    assert info.value.pointer == "/solver/seeds"

def test_empty_class_defaults_to_the_contractible_one():
    config = parse_config(json.dumps({"scenario": "constants", "manifold": {"dim": 3}}))
    assert config.alpha == [0, 0, 0]

def test_published_schema_lists_every_section():
    published = json.loads(SCHEMA_PATH.read_text())
    assert set(published["properties"]) == set(schema()["properties"])
    assert published["required"] == ["scenario"]

def test_written_schema_matches_the_models(tmp_path):
    path = write_schema(tmp_path / "schema.json")
    assert json.loads(path.read_text()) == schema()

def test_validate_reports_class_mismatch(tmp_path):
    path = _write(tmp_path, {"scenario": "orbits", "manifold": {"dim": 3}, "class": [0, 1]})
    diag = validate_config(path)
    assert not diag.ok
    assert "/class" in diag.errors[0]

def test_validate_warns_about_non_atoroidal_classes(tmp_path):
    path = _write(tmp_path, {"scenario": "orbits", "class": [1, 0]})
    diag = validate_config(path)
    assert diag.ok
    assert any("atoroidal" in w for w in diag.warnings)

def test_validate_warns_above_the_threshold_and_notes_the_default_class(tmp_path):
    path = _write(tmp_path, {"scenario": "orbits", "sigma": {"delta": 1.0}})
    diag = validate_config(path)
    assert diag.ok
    assert any("delta_0" in w for w in diag.warnings)
    assert any("delta(L, sigma, g)" in w for w in diag.warnings)
    assert any("alpha = 0" in n for n in diag.notices)

@pytest.mark.parametrize("document, pointer", [
    ({"scenario": "constants", "manifold": {"params": {"gram": [[1, 0, 0], [0, 1, 0], [0, 0, 1]]}}},
     "/manifold/params/gram"),
    ({"scenario": "orbits", "sigma": {"form": "matrix"}}, "/sigma/params/matrix"),
])
def test_builder_errors_are_config_errors(tmp_path, capsys, document, pointer):
    path = _write(tmp_path, document)
    diag = validate_config(path)
    assert not diag.ok
    assert pointer in diag.errors[0]
    assert app.main(["validate", "--config", str(path)]) == 2
    capsys.readouterr()
    assert app.main([document["scenario"], "--config", str(path), "--out", str(tmp_path)]) == 2
    assert pointer in capsys.readouterr().out

def test_validate_reports_unreadable_files(tmp_path):
    diag = validate_config(tmp_path / "missing.json")
    assert not diag.ok
    assert "cannot read config" in diag.errors[0]

def test_problem_build_with_rescaling():
    config = parse_config(json.dumps({"scenario": "constants", "sigma": {"params": {"strength": 4.0}},
                                      "manifold": {"rescale": True}}))
    problem = build_problem(config)
    assert problem.upsilon == pytest.approx(4.0)
    assert problem.H.manifold is problem.M

def test_constants_scenario_reproduces_the_goldens(scenarios_dir, tmp_path):
    config = _with_output(load_config(scenarios_dir / "t2_constants.json"), tmp_path)
    report = run_scenario(config)
    assert report["summary"]["passed"], report["summary"]["failed"]
    iso = report["results"]["isoperimetric"]
    assert iso["C0"] == pytest.approx(2.70711, abs=1e-5)
    assert iso["C1"] == pytest.approx(4.12132, abs=1e-5)
    assert report["results"]["torus_window"]["predicted_index"] == 0
    written = json.loads((tmp_path / "constants.json").read_text())
    assert written["results"]["delta0"] == pytest.approx(0.092345, abs=1e-5)

def test_reports_are_byte_identical_across_runs(scenarios_dir, tmp_path):
    config = load_config(scenarios_dir / "t2_constants.json")
    run_scenario(_with_output(config, tmp_path / "a"))
    run_scenario(_with_output(config, tmp_path / "b"))
    a = (tmp_path / "a" / "constants.json").read_text()
    b = (tmp_path / "b" / "constants.json").read_text().replace(str(tmp_path / "b"), str(tmp_path / "a"))
    assert a == b

def test_run_warns_above_both_thresholds(tmp_path):
    config = parse_config(json.dumps({"scenario": "constants", "sigma": {"delta": 1.0},
                                      "outputs": {"directory": str(tmp_path)}}))
    warnings = run_scenario(config)["warnings"]
    assert any("delta_0" in w for w in warnings)
    assert any("delta(L, sigma, g)" in w for w in warnings)

    below = config.model_copy(update={"sigma": config.sigma.model_copy(update={"delta": 0.05})})
    assert run_scenario(below)["warnings"] == []

def test_t2_acceptance_sizes(scenarios_dir):
    orbits = load_config(scenarios_dir / "t2_constant_orbits.json")
    assert orbits.solver.seeds == 32
    iso = load_config(scenarios_dir / "t2_isoperimetric.json")
    assert iso.isoperimetric.samples == 1000
    assert iso.alpha == [0, 0]
    assert iso.sigma.delta * iso.system.tau < 0.18469903126

def test_failed_expectation_fails_the_report(tmp_path):
    config = parse_config(json.dumps({"scenario": "constants", "expect": {"C0": 3.0},
                                      "outputs": {"directory": str(tmp_path)}}))
    report = run_scenario(config)
    assert report["summary"]["failed"] == ["expect_C0"]

def test_index_sweep_scenario(tmp_path):
    config = parse_config(json.dumps({
        "scenario": "index_sweep",
        "sweep": {"deltas": [5.0, 6.4, 7.0], "N_values": [64, 128]},
        "expect": {"indices": [0, 2, 2]},
        "outputs": {"directory": str(tmp_path)},
    }))
    report = run_scenario(config)
    assert report["summary"]["passed"], report["summary"]["failed"]
    assert (tmp_path / "index_sweep_index_sweep.csv").exists()

def test_orbit_scenario_in_the_vertical_class(tmp_path):
    config = parse_config(json.dumps({
        "scenario": "orbits",
        "manifold": {"dim": 3},
        "system": {"tau": 0.1},
        "class": [0, 0, 1],
        "resolution": 32,
        "solver": {"seeds": 2},
        "flow": {"crosscheck_dt": 1e-3},
        "expect": {"action": 5.0, "straight_line": True},
        "expect_tol": 1e-6,
        "outputs": {"directory": str(tmp_path)},
    }))
    report = run_scenario(config)
    assert report["summary"]["passed"], report["summary"]["failed"]
    names = [a["name"] for a in report["assertions"]]
    assert "coercivity" in names and "crosscheck_precondition" in names
    assert report["results"]["failed_seeds"] == []
    orbit = report["results"]["orbits"][0]
    assert orbit["flow_consistent"]
    assert orbit["crosscheck_precondition"] is True
    assert orbit["coercivity_violations"] == 0
    assert (tmp_path / "orbits_orbit0.poly").exists()

def test_isoperimetric_scenario(tmp_path):
    config = parse_config(json.dumps({
        "scenario": "isoperimetric",
        "manifold": {"dim": 3},
        "sigma": {"delta": 0.1},
        "class": [0, 0, 1],
        "resolution": 32,
        "isoperimetric": {"samples": 50},
        "outputs": {"directory": str(tmp_path)},
    }))
    report = run_scenario(config)
    names = [a["name"] for a in report["assertions"]]
    assert names == ["isoperimetric_inequality", "coercivity"]
    assert report["summary"]["passed"]
    assert 0.0 < report["results"]["max_ratio"] <= 1.0

def test_flow_scenario_closes_circles(tmp_path):
    config = parse_config(json.dumps({
        "scenario": "flow",
        "flow": {"deltas": [2.0], "dt": 1e-3, "monodromy_dt": 2e-3, "trajectory_every": 50},
        "outputs": {"directory": str(tmp_path)},
    }))
    report = run_scenario(config)
    assert report["summary"]["passed"], report["summary"]["failed"]
    run = report["results"]["flows"][0]
    assert run["period"] == pytest.approx(math.pi)

def test_cli_exit_codes(scenarios_dir, tmp_path, capsys):
    assert app.main(["constants", "--config", str(scenarios_dir / "t2_constants.json"), "--out", str(tmp_path)]) == 0
    assert "assertions passed" in capsys.readouterr().out
    bad = _write(tmp_path, {"scenario": "constants", "expect": {"lorentz_norm": 2.0}}, "bad.json")
    assert app.main(["constants", "--config", str(bad), "--out", str(tmp_path)]) == 1
    assert "FAILED expect_lorentz_norm" in capsys.readouterr().out
    broken = _write(tmp_path, {"scenario": "constants", "bogus": 1}, "broken.json")
    assert app.main(["constants", "--config", str(broken)]) == 2
    assert "/bogus" in capsys.readouterr().out
    assert app.main(["validate", "--config", str(broken)]) == 2

def test_cli_overrides(scenarios_dir, tmp_path):
    config = load_config(scenarios_dir / "t3_orbits.json")
    args = app.build_parser().parse_args(["orbits", "--config", "x", "--seed", "9", "--resolution", "48",
                                          "--out", str(tmp_path)])
    updated = app.apply_overrides(config, "orbits", args)
    assert updated.solver.rng_seed == 9
    assert updated.resolution == 48
    assert updated.outputs.directory == str(tmp_path)
    assert updated.solver.seeds == config.solver.seeds

@pytest.mark.slow
@pytest.mark.parametrize("name", ["t2_circles.json", "t2_constant_orbits.json", "t3_orbits.json",
                                  "t2_isoperimetric.json", "t3_isoperimetric.json", "t2_index_sweep.json",
                                  "full_report.json"])
def test_builtin_scenarios_pass(scenarios_dir, tmp_path, name):
    config = _with_output(load_config(scenarios_dir / name), tmp_path)
    report = run_scenario(config)
    assert report["summary"]["passed"], report["summary"]["failed"]
    if config.scenario == "isoperimetric":
        assert [a["name"] for a in report["assertions"]] == ["isoperimetric_inequality", "coercivity"]
