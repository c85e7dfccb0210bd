import json

import pytest

from kslab.cli import main


def test_list(capsys):
    assert main(["list"]) == 0
    out = capsys.readouterr().out
    assert "stabilization-powerlaw\t" in out


def test_run_and_report(tmp_path, capsys):
    assert main(["run", "stabilization-powerlaw", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "PASS  rate" in out and "exit_event=Converged" in out
    assert main(["run", "scaling-powerlaw", "--set", "config.t_end=0.2", "--out",
                 str(tmp_path)]) == 0
    capsys.readouterr()
    assert main(["report", str(tmp_path)]) == 0
    text = capsys.readouterr().out
    lines = text.strip().splitlines()
    assert lines[0].startswith("name,config_hash,exit_event")
    assert len(lines) == 3
    assert (tmp_path / "report.csv").read_text() == text
    figs = sorted(tmp_path.rglob("figure.png"))
    assert len(figs) == 2 and all(f.stat().st_size > 1000 for f in figs)


def test_run_physics_failure_exit_code(tmp_path, capsys):
    rc = main(["run", "stabilization-powerlaw", "--set", "config.t_end=1", "--out", str(tmp_path)])
    assert rc == 2
    assert "FAIL  exit_event" in capsys.readouterr().out


def test_run_unknown_scenario(capsys):
    assert main(["run", "no-such-scenario"]) == 1
    assert "unknown scenario" in capsys.readouterr().err


def test_check_gamma(capsys):
    assert main(["check-gamma", '{"kind": "power_law", "params": {"k": 1.5}}',
                 "--range", "0.1,1e6", "--samples", "1000"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["A1"]["verdict"] == "fails"
    assert rep["A3"]["l0_sup"] == pytest.approx(5 / 3)


def test_check_gamma_from_file(tmp_path, capsys):
    path = tmp_path / "gamma.json"
    path.write_text(json.dumps({"kind": "log_power", "params": {"k": 1.0}}))
    assert main(["check-gamma", str(path), "--k", "1.01"]) == 0
    rep = json.loads(capsys.readouterr().out)
    assert rep["A2"]["verdict"] == "holds_on_sample"


def test_eig(capsys):
    assert main(["eig", '{"geometry": "rectangle", "extents": [6.283185307179586, 3.141592653589793], '
                 '"cells": [64, 32]}']) == 0
    assert json.loads(capsys.readouterr().out)["mu1"] == 0.25
    assert main(["eig", '{"geometry": "radial_ball", "extents": [1.0], "cells": [100], '
                 '"ambient_dim": 4}']) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["analytic"] is None
    assert out["mu1"] == pytest.approx(26.3746, rel=1e-3)


def test_sweep_empty_grid(tmp_path, capsys):
    assert main(["sweep", "stabilization-powerlaw", "--grid", "{}", "--out", str(tmp_path)]) == 0


def test_sweep_cli(tmp_path, capsys):
    assert main(["sweep", "scaling-powerlaw", "--grid", '{"config.t_end": [0.1, 0.2]}',
                 "--workers", "1", "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("index,config.t_end,exit_event")
    assert len(lines) == 3
