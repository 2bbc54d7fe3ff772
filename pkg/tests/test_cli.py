import json

import numpy as np
import pytest

from quadcrawl.cli import EXIT_DOMAIN, EXIT_OK, EXIT_USAGE, config_hash, main
from quadcrawl.datagen import DATASET_HEADER, Dataset, read_dataset, write_dataset
from quadcrawl.planner import TRAJECTORY_HEADER, read_trajectory
from quadcrawl.policy import load_model, save_model, zero_model
from quadcrawl.scenario import SCENARIO_DIR_ENV, paper_scenario, save_scenario


def test_config_hash_is_stable_and_order_free():
    assert config_hash({"a": 1, "b": [1, 2]}) == config_hash({"b": [1, 2], "a": 1})
    assert len(config_hash({})) == 16


def test_missing_subcommand_is_usage_error():
    assert main([]) == EXIT_USAGE
    assert main(["plan"]) == EXIT_USAGE
    assert main(["fly"]) == EXIT_USAGE


def test_plan_start_equals_goal(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["plan", "--start", "3,0,0.28,0", "--output", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# config_hash=")
    assert lines[1] == TRAJECTORY_HEADER
    assert len(lines) == 4
    report = json.loads((tmp_path / "p.csv.report.json").read_text())
    assert report["knots"] == 2


def test_plan_paper_scenario_crawls(tmp_path):
    out = tmp_path / "p.csv"
    assert main(["plan", "--output", str(out)]) == EXIT_OK
    traj = read_trajectory(out)
    X = traj.states
    under = (X[:, 0] >= 1.3) & (X[:, 0] <= 1.7)
    assert X[under, 2].max() <= 0.19


def test_plan_2d_mode_goes_sideways(tmp_path):
    out = tmp_path / "p2.csv"
    assert main(["plan", "--mode", "2d", "--output", str(out)]) == EXIT_OK
    X = read_trajectory(out).states
    assert np.abs(X[:, 1]).max() >= 0.5
    np.testing.assert_allclose(X[:, 2], 0.28)


def test_plan_in_collision_is_domain_failure(tmp_path, capsys):
    assert main(["plan", "--start", "1.5,0,0.24,0", "--output", str(tmp_path / "x.csv")]) == EXIT_DOMAIN
    assert "error" in capsys.readouterr().err


def test_malformed_scenario_names_the_field(tmp_path, capsys):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"schema_version": 1, "clearance": "wide"}))
    assert main(["plan", "--scenario", str(bad), "--output", str(tmp_path / "x.csv")]) == EXIT_USAGE
    assert "clearance" in capsys.readouterr().err


def test_bad_pose_is_usage_error(tmp_path):
    assert main(["plan", "--start", "1,2", "--output", str(tmp_path / "x.csv")]) == EXIT_USAGE


def test_scenario_from_environment_directory(tmp_path, monkeypatch):
    save_scenario(paper_scenario(), tmp_path / "scene.json")
    monkeypatch.setenv(SCENARIO_DIR_ENV, str(tmp_path))
    out = tmp_path / "p.csv"
    assert main(["plan", "--scenario", "scene.json", "--start", "3,0,0.28,0", "--output", str(out)]) == EXIT_OK


def test_gen_zero_count_writes_empty_file(tmp_path):
    out = tmp_path / "d.csv"
    assert main(["gen", "--count", "0", "--output", str(out)]) == EXIT_OK
    lines = out.read_text().splitlines()
    assert lines[1:] == [DATASET_HEADER]
    assert len(read_dataset(out)) == 0
    summary = json.loads((tmp_path / "d.csv.summary.json").read_text())
    assert summary["samples"] == 0


def test_gen_rejects_bad_counts(tmp_path):
    assert main(["gen", "--count", "-1", "--output", str(tmp_path / "d.csv")]) == EXIT_USAGE
    assert main(["gen", "--points", "1", "--output", str(tmp_path / "d.csv")]) == EXIT_USAGE


def tiny_dataset(path, trajectories=10, points=6):
    rng = np.random.default_rng(0)
    n = trajectories * points
    x = rng.uniform([0, -1, 0.18, -0.1], [3, 1, 0.28, 0.1], size=(n, 4))
    ds = Dataset(x, 0.1 * x, np.repeat(np.arange(trajectories), points), np.tile(np.arange(points), trajectories), np.zeros(n))
    write_dataset(ds, path)
    return ds


def test_train_missing_dataset(tmp_path, capsys):
    assert main(["train", "--dataset", str(tmp_path / "nope.csv"), "--output", str(tmp_path / "m.json")]) == EXIT_USAGE
    assert "not found" in capsys.readouterr().err


def test_train_small_and_deterministic(tmp_path):
    data = tmp_path / "d.csv"
    tiny_dataset(data)
    args = ["train", "--dataset", str(data), "--hidden", "8,8", "--epochs", "3", "--batch-size", "16", "--lr", "0.1"]
    assert main([*args, "--output", str(tmp_path / "a.json")]) == EXIT_OK
    assert main([*args, "--output", str(tmp_path / "b.json")]) == EXIT_OK
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    model = load_model(tmp_path / "a.json")
    assert model.layer_sizes == (4, 8, 8, 4)
    history = (tmp_path / "a.json.history.csv").read_text().splitlines()
    assert history[0].startswith("# config_hash=")
    assert history[1] == "epoch,train_mse,val_mse"
    assert len(history) == 2 + 4


def test_train_paper_preset_from_config_file(tmp_path, capsys):
    data = tmp_path / "d.csv"
    tiny_dataset(data)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"hidden": [256, 1024, 1024, 1024, 1024, 256], "batch_size": 1024, "epochs": 0, "learning_rate": 0.5}))
    assert main(["train", "--dataset", str(data), "--config", str(cfg), "--output", str(tmp_path / "m.json")]) == EXIT_OK
    assert load_model(tmp_path / "m.json").layer_sizes == (4, 256, 1024, 1024, 1024, 1024, 256, 4)


def test_train_rejects_unknown_config_key(tmp_path):
    data = tmp_path / "d.csv"
    tiny_dataset(data)
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"momentum": 0.9}))
    assert main(["train", "--dataset", str(data), "--config", str(cfg), "--output", str(tmp_path / "m.json")]) == EXIT_USAGE


def test_rollout_start_at_goal(tmp_path, capsys):
    model = tmp_path / "zero.json"
    save_model(zero_model(), model)
    trace = tmp_path / "t.csv"
    assert main(["rollout", "--model", str(model), "--start", "3,0,0.28,0", "--output", str(trace)]) == EXIT_OK
    assert "outcome=reached ticks=0" in capsys.readouterr().out
    assert len(trace.read_text().splitlines()) == 3


def test_rollout_zero_model_times_out(tmp_path, capsys):
    model = tmp_path / "zero.json"
    save_model(zero_model(), model)
    assert main(["rollout", "--model", str(model), "--max-time", "0.3"]) == EXIT_DOMAIN
    assert "outcome=timeout" in capsys.readouterr().out


def test_rollout_needs_a_policy(tmp_path):
    assert main(["rollout"]) == EXIT_USAGE
    assert main(["rollout", "--model", str(tmp_path / "missing.json")]) == EXIT_USAGE


def test_eval_zero_trials(tmp_path, capsys):
    model = tmp_path / "zero.json"
    save_model(zero_model(), model)
    out = tmp_path / "e.json"
    assert main(["eval", "--model", str(model), "--trials", "0", "--skip-compare", "--output", str(out)]) == EXIT_OK
    summary = json.loads(out.read_text())
    assert summary["trials"] == 0
    assert set(summary) == {"config_hash", "trials"}
