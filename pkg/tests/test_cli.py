import json
import os
import subprocess
import sys

import pytest

from contiplan.cli import build_parser, main
from contiplan.occupancy import SceneSpec


def test_scene_gen_and_plan(tmp_path, capsys):
    assert main(["scene", "gen", "--archetype", "Obstacle", "--seed", "3", "--out", str(tmp_path), "--grid"]) == 0
    path = capsys.readouterr().out.strip()
    spec = SceneSpec.from_json(open(path).read())
    assert spec.archetype == "Obstacle"
    assert list(tmp_path.glob("*.grid"))
    assert main(["plan", "--scene", path, "--seed", "3", "--shortcut", "20", "--out", str(tmp_path)]) == 0
    assert "waypoints" in capsys.readouterr().out
    assert list(tmp_path.glob("plan_*_tau5.json"))


def test_seed_from_environment(tmp_path, capsys, monkeypatch):
    monkeypatch.setenv("CONTIPLAN_SEED", "11")
    main(["scene", "gen", "--out", str(tmp_path)])
    a = capsys.readouterr().out.strip()
    main(["scene", "gen", "--seed", "11", "--out", str(tmp_path / "b")])
    b = capsys.readouterr().out.strip()
    assert open(a).read() == open(b).read()


def test_trial_prints_canonical_json(capsys):
    assert main(["trial", "--archetype", "Open", "--seed", "1"]) == 0
    d = json.loads(capsys.readouterr().out)
    assert d["archetype"] == "Open" and "times" not in d


def test_suite_then_report(tmp_path, capsys):
    out = tmp_path / "run"
    argv = ["suite", "--archetype", "Open", "--method", "Ours", "--method", "NoShape", "--trials", "2",
            "--max-iterations", "600", "--out", str(out)]
    assert main(argv) == 0
    first = capsys.readouterr().out
    assert "SR@2cm" in first
    results = out / "results.jsonl"
    assert len(results.read_text().splitlines()) == 4
    assert main(["report", str(results), "--out", str(tmp_path / "rep")]) == 0
    assert (tmp_path / "rep" / "summary.csv").read_text() == (out / "summary.csv").read_text()


def test_sweep_tau(tmp_path, capsys):
    assert main(["sweep-tau", "--archetype", "Open", "--taus", "0", "12", "--trials", "1", "--max-iterations",
                 "400", "--out", str(tmp_path)]) == 0
    summary = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(summary) == 3


def test_config_file(tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"planner": {"tau": 0, "max_iterations": 700}}))
    assert main(["plan", "--config", str(cfg), "--archetype", "Open", "--out", str(tmp_path)]) == 0
    assert list(tmp_path.glob("plan_*_tau0.json"))


def test_parser_rejects_unknown_values():
    p = build_parser()
    with pytest.raises(SystemExit):
        p.parse_args(["suite", "--archetype", "Swamp"])
    with pytest.raises(SystemExit):
        p.parse_args(["ablate"])


def test_module_entry_point():
    env = dict(os.environ)
    out = subprocess.run([sys.executable, "-m", "contiplan", "--help"], capture_output=True, text=True, env=env)
    assert out.returncode == 0
    for cmd in ("scene", "plan", "train", "trial", "suite", "sweep-tau", "ablate", "report"):
        assert cmd in out.stdout
