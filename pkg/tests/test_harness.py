import csv
import json
import math

import numpy as np
import pytest

from kslab import harness
from kslab.grid import build_grid, integrate, mean
from kslab.harness import (
    EXIT_INVARIANT,
    EXIT_OK,
    EXIT_PHYSICS,
    RunManifest,
    Scenario,
    ScenarioError,
    apply_overrides,
    expand_grid,
    exit_code_for,
    generate_initial,
    load_scenario,
    read_series_csv,
    read_snapshot,
    run_scenario,
    scenario_names,
    sweep,
    write_snapshot,
)

SHIPPED = [
    "critical-mass-sub",
    "critical-mass-super",
    "lyapunov-powerlaw-2d",
    "radial-powerlaw-n4",
    "random-powerlaw",
    "scaling-powerlaw",
    "stabilization-powerlaw",
]


def test_shipped_scenarios_load():
    assert scenario_names() == SHIPPED
    for name in SHIPPED:
        sc = load_scenario(name)
        assert sc.name == name
        sc.build()


def test_constant_plus_cosine(interval64):
    u = generate_initial({"kind": "constant_plus_cosine", "base": 1, "amplitude": 0.5}, interval64)
    assert mean(interval64, u) == pytest.approx(1.0, abs=1e-15)
    assert np.allclose(u, 1 + 0.5 * np.cos(interval64.centers[:, 0]), atol=1e-15)
    with pytest.raises(ScenarioError):
        generate_initial({"kind": "constant_plus_cosine", "base": 1, "amplitude": 1}, interval64)


def test_gaussian_bump_mass(rect):
    u = generate_initial({"kind": "gaussian_bump", "width": 0.4, "target_mass": 4 * math.pi}, rect)
    assert integrate(rect, u) == pytest.approx(4 * math.pi, abs=1e-10)
    assert np.all(u >= 0)
    u = generate_initial({"kind": "gaussian_bump", "width": 0.4, "target_mass": 30,
                          "background": 0.5}, rect)
    assert integrate(rect, u) == pytest.approx(30, abs=1e-10)
    assert u.min() == pytest.approx(0.5, rel=1e-6)
    with pytest.raises(ScenarioError):
        generate_initial({"kind": "gaussian_bump", "target_mass": 1, "background": 5}, rect)


def test_random_perturbation_deterministic(interval64):
    spec = {"kind": "random_perturbation", "amplitude": 0.3, "seed": 7}
    a = generate_initial(spec, interval64)
    b = generate_initial(spec, interval64)
    assert a.tobytes() == b.tobytes()
    c = generate_initial({**spec, "seed": 8}, interval64)
    assert not np.array_equal(a, c)
    with pytest.raises(ScenarioError):
        generate_initial({"kind": "smiley"}, interval64)


def test_overrides():
    sc = load_scenario("stabilization-powerlaw")
    out = apply_overrides(sc, ["motility.params.k=0.75", "config.t_end=5", "name=\"x\""])
    assert out.motility["params"]["k"] == 0.75
    assert out.config["t_end"] == 5
    assert out.name == "x"
    assert sc.motility["params"]["k"] == 0.5
    out = apply_overrides(sc, {"options.rate_delta": 0.2})
    assert out.option("rate_delta") == 0.2
    with pytest.raises(ScenarioError):
        apply_overrides(sc, ["motility.params.k"])
    with pytest.raises(ScenarioError):
        apply_overrides(sc, {"name.x": 1})
    with pytest.raises(ValueError):
        apply_overrides(sc, {"config.dtt": 0.1})


def test_config_hash_stable():
    a = load_scenario("stabilization-powerlaw")
    b = Scenario.from_dict(json.loads(json.dumps(a.to_dict())))
    assert a.config_hash() == b.config_hash()
    assert apply_overrides(a, {"config.t_end": 41}).config_hash() != a.config_hash()


def test_unknown_check_rejected():
    data = load_scenario("stabilization-powerlaw").to_dict()
    data["checks"] = ["mass", "vibes"]
    with pytest.raises(ScenarioError):
        Scenario.from_dict(data)


def test_snapshot_roundtrip(tmp_path, ball4):
    u = np.linspace(1, 2, ball4.num_cells)
    v = u[::-1].copy()
    write_snapshot(tmp_path / "s.csv", ball4, u, v, 0.25)
    lines = (tmp_path / "s.csv").read_text().splitlines()
    assert json.loads(lines[0])["grid"]["ambient_dim"] == 4
    assert lines[1] == "index,r,u,v"
    g, t, u2, v2 = read_snapshot(tmp_path / "s.csv")
    assert t == 0.25 and g.ambient_dim == 4
    assert np.array_equal(u, u2) and np.array_equal(v, v2)


def test_run_scenario_artifacts(tmp_path):
    man = run_scenario("stabilization-powerlaw", ["config.t_end=2"], tmp_path)
    run_dir = man.directory
    assert run_dir.name == f"stabilization-powerlaw-{man.data['config_hash'][:8]}"
    loaded = RunManifest.load(run_dir)
    assert loaded.data["exit_event"] == "Completed"
    # the shortened run cannot converge, so exit_event and rate fail as physics
    assert loaded.exit_code == EXIT_PHYSICS
    assert not loaded.verdicts["exit_event"]["passed"]
    assert loaded.verdicts["mass"]["passed"]
    series = read_series_csv(run_dir / "series.csv")
    assert len(series) == man.data["steps"] + 1
    assert sorted(p.name for p in (run_dir / "snapshots").iterdir()) == [
        "snapshot_00000.csv", "snapshot_00001.csv"]
    assert loaded.data["theory"]["mu1"] == 1.0


def test_run_scenario_honours_env(tmp_path, monkeypatch):
    monkeypatch.setenv(harness.OUTPUT_ENV, str(tmp_path / "envout"))
    man = run_scenario("scaling-powerlaw", {"config.t_end": 0.1})
    assert man.path.parent.parent == tmp_path / "envout"


def test_run_scenario_without_writing():
    man = run_scenario("stabilization-powerlaw", {"config.t_end": 0.5}, write=False)
    assert man.path is None and man.data["artifacts"] == {}


def test_all_snapshots_option(tmp_path):
    man = run_scenario("scaling-powerlaw", {"config.t_end": 0.05, "options.snapshots": True},
                       tmp_path)
    assert len(man.data["artifacts"]["snapshots"]) == man.data["steps"] + 1


def test_exit_codes():
    ok = {"a": {"kind": "invariant", "passed": True}, "b": {"kind": "physics", "passed": True}}
    assert exit_code_for(ok) == EXIT_OK
    assert exit_code_for({**ok, "b": {"kind": "physics", "passed": False}}) == EXIT_PHYSICS
    assert exit_code_for({"a": {"kind": "invariant", "passed": False},
                          "b": {"kind": "physics", "passed": False}}) == EXIT_INVARIANT


def test_expand_grid():
    assert expand_grid({}) == []
    cells = expand_grid({"a": [1, 2], "b": ["x", "y", "z"]})
    assert len(cells) == 6
    assert cells[0] == {"a": 1, "b": "x"} and cells[1] == {"a": 1, "b": "y"}
    assert expand_grid([{"a": 1}, {"b": 2}]) == [{"a": 1}, {"b": 2}]


def test_sweep_over_k(tmp_path):
    rows, path = sweep("stabilization-powerlaw",
                       {"motility.params.k": [0.25, 0.5, 0.75, 1.0]}, tmp_path, workers=2)
    assert [r["motility.params.k"] for r in rows] == [0.25, 0.5, 0.75, 1.0]
    assert all(r["exit_event"] == "Converged" for r in rows)
    assert all(r["error"] == "" for r in rows)
    with open(path) as fh:
        table = list(csv.DictReader(fh))
    assert len(table) == 4
    assert table[0]["exit_code"] == "0"


def test_sweep_records_errors(tmp_path):
    rows, _ = sweep("stabilization-powerlaw",
                    [{"config.t_end": 0.1}, {"initial.amplitude": 3.0}], tmp_path, workers=1)
    assert rows[0]["error"] == ""
    assert "ScenarioError" in rows[1]["error"]
    assert rows[1]["exit_code"] == harness.EXIT_ERROR


def test_sweep_empty(tmp_path):
    rows, path = sweep("stabilization-powerlaw", {}, tmp_path)
    assert rows == []
    assert path.read_text().strip().split(",")[0] == "index"


@pytest.mark.slow
def test_sweep_over_mass(tmp_path):
    crit = 4 * math.pi
    rows, _ = sweep("critical-mass-sub",
                    {"initial.target_mass": [0.5 * crit, 1.5 * crit, 3.0 * crit],
                     "config.t_end": [20.0]}, tmp_path)
    assert rows[0]["exit_event"] == "Converged"
    ratios = [r["peak_to_mean"] for r in rows]
    assert ratios[0] < ratios[1] < ratios[2]


def test_manifest_roundtrip_reproduces_verdicts(tmp_path):
    man = run_scenario("random-powerlaw", None, tmp_path)
    loaded = RunManifest.load(man.path)
    again = run_scenario(Scenario.from_dict(loaded.data["scenario"]), write=False)
    assert again.data["config_hash"] == loaded.data["config_hash"]
    assert json.dumps(again.verdicts, sort_keys=True) == json.dumps(loaded.verdicts, sort_keys=True)
