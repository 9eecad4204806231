import json

import pytest

from platoon_guard.cli import EXIT_COLLISION, EXIT_ERROR, EXIT_OK, load_config, main

TINY = {"agent": {"hidden": [8], "batch_size": 16, "warmup": 16, "explore_episodes": 1},
        "training": {"episodes": 2}}


@pytest.fixture
def tiny_config(tmp_path):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(TINY))
    return path


def test_baseline_collision_exit_code(tmp_path, capsys):
    code = main(["baseline", "--scenario", "brake1", "--out", str(tmp_path)])
    assert code == EXIT_COLLISION
    report = json.loads(capsys.readouterr().out)
    assert report["collided"] and [1, 2] in report["collision_pairs"]
    assert (tmp_path / "trajectory.csv").exists()
    for kind in ("timespace", "timespeed", "spacing"):
        assert (tmp_path / f"{kind}.svg").exists()


def test_eval_rl_needs_checkpoint():
    assert main(["eval", "--scenario", "brake1", "--controller", "rl"]) == EXIT_ERROR


def test_eval_rl_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "ck.json"
    bad.write_text("garbage")
    assert main(["eval", "--scenario", "brake1", "--controller", "rl", "--checkpoint", str(bad)]) == EXIT_ERROR


def test_usage_error_is_not_collision_code():
    assert main(["eval", "--scenario", "nowhere"]) == EXIT_ERROR
    assert main([]) == EXIT_ERROR


def test_feasibility(capsys):
    assert main(["feasibility", "--scenario", "brake2"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert out["feasible"] and out["verified"]


def test_train_then_eval(tmp_path, tiny_config, capsys):
    out = tmp_path / "run"
    assert main(["train", "--config", str(tiny_config), "--seed", "3", "--out", str(out)]) == EXIT_OK
    assert (out / "checkpoint.json").exists()
    log = json.loads((out / "training_log.json").read_text())
    assert len(log["returns"]) == 2
    code = main(["eval", "--scenario", "brake2", "--controller", "rl",
                 "--checkpoint", str(out / "checkpoint.json")])
    assert code in (EXIT_OK, EXIT_COLLISION)


def test_seed_env_fallback(tmp_path, tiny_config, monkeypatch):
    monkeypatch.setenv("PLATOON_GUARD_SEED", "11")
    logs = []
    for name in ("a", "b"):
        assert main(["train", "--config", str(tiny_config), "--out", str(tmp_path / name)]) == EXIT_OK
        logs.append((tmp_path / name / "training_log.json").read_text())
    assert logs[0] == logs[1]
    monkeypatch.setenv("PLATOON_GUARD_SEED", "x")
    assert main(["train", "--config", str(tiny_config), "--out", str(tmp_path / "c")]) == EXIT_ERROR


def test_suite(tmp_path, tiny_config):
    assert main(["suite", "--seeds", "1..2", "--config", str(tiny_config), "--out", str(tmp_path)]) == EXIT_OK
    agg = json.loads((tmp_path / "aggregate.json").read_text())
    assert agg["seeds"] == [1, 2]


def test_plot(tmp_path):
    main(["baseline", "--scenario", "brake2", "--out", str(tmp_path)])
    out = tmp_path / "gap.svg"
    assert main(["plot", "--in", str(tmp_path / "trajectory.csv"), "--kind", "spacing",
                 "--out", str(out)]) == EXIT_OK
    assert out.read_text().startswith("<svg")


def test_config_sections(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"agent": {}, "extra": {}}))
    with pytest.raises(ValueError):
        load_config(path)
    assert load_config(None) == {"sim": {}, "scenario": {}, "agent": {}, "training": {}}
