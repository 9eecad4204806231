import json

import numpy as np
import pytest

from platoon_guard.env import (OBS_SCALE, REWARD_COLLISION, REWARD_SAFE, Normal, Observation, PlatoonEnv,
                               ScenarioConfig, Uniform, denormalize_obs, discounted_return, make_scenario,
                               normalize_obs)


def test_brake1_follower_is_heavy():
    cfg = make_scenario("brake1")
    spec = cfg.spec_for(cfg.vehicle_classes[-1])
    assert (spec.length, spec.max_decel) == (15.0, 6.0)


def test_brake2_initial_gaps():
    env = PlatoonEnv(make_scenario("brake2"))
    env.reset(seed=0)
    assert env.sim.chain.gaps() == pytest.approx([16.0, 16.0])


def test_multirl_has_three_middles():
    cfg = make_scenario("multirl")
    assert cfg.n_vehicles == 5
    assert make_scenario("multirl", n_middle=2).n_vehicles == 4


def test_train_random_leader_decel_drawn_from_normal():
    cfg = make_scenario("train_random")
    env = PlatoonEnv(cfg)
    draws = []
    for s in range(200):
        env.reset(seed=s)
        draws.append(env.sim.brake_decel)
        assert 100 <= env.sim.brake_step <= 150
    draws = np.array(draws)
    assert abs(draws.mean() + 3.0) < 0.05
    assert 0.15 < draws.std() < 0.25


def test_train_random_follower_class_varies():
    env = PlatoonEnv(make_scenario("train_random"))
    seen = set()
    for s in range(40):
        env.reset(seed=s)
        seen.add(env.sim.specs[-1].vclass.value)
    assert seen == {"light", "heavy"}


def test_unknown_scenario():
    with pytest.raises(ValueError):
        make_scenario("brake9")


def test_reset_brake1_observation():
    obs = PlatoonEnv(make_scenario("brake1")).reset(seed=0)
    assert obs.as_array() == pytest.approx([16, 16, 25, 25, 25, 0, 0, 0])


def test_reset_same_seed_identical():
    env = PlatoonEnv(make_scenario("train_random"))
    a = env.reset(seed=7).as_array()
    b = env.reset(seed=7).as_array()
    assert np.array_equal(a, b)


def test_reset_overlapping_positions_fails():
    cfg = make_scenario("brake2", init_positions=[Normal(10.0), Normal(10.0), Normal(10.0)])
    with pytest.raises(RuntimeError):
        PlatoonEnv(cfg).reset(seed=0)


def test_collision_free_step_reward():
    env = PlatoonEnv(make_scenario("brake2"))
    env.reset(seed=0)
    res = env.step(0.0)
    assert res.reward == REWARD_SAFE == 15.0
    assert not res.done


def test_collision_step_reward_and_done():
    # ego accelerates into the leader
    env = PlatoonEnv(make_scenario("brake2"))
    env.reset(seed=0)
    rewards = []
    while True:
        res = env.step(3.0)
        rewards.append(res.reward)
        if res.done:
            break
    assert res.reward == REWARD_COLLISION == -3000.0
    assert res.info["terminal"] and (0, 1) in res.info["collisions"]
    k = len(rewards)
    assert sum(rewards) == 15.0 * (k - 1) - 3000.0
    with pytest.raises(RuntimeError):
        env.step(0.0)


def test_full_episode_returns_22500():
    cfg = make_scenario("brake2", brake_decel=Normal(0.0))
    env = PlatoonEnv(cfg)
    env.reset(seed=0)
    total, n = 0.0, 0
    while True:
        res = env.step(0.0)
        total += res.reward
        n += 1
        if res.done:
            break
    assert n == 1500
    assert total == 22500.0
    assert res.info["truncated"] and not res.info["terminal"]


def test_step_rejects_nan():
    env = PlatoonEnv(make_scenario("brake2"))
    env.reset(seed=0)
    with pytest.raises(ValueError):
        env.step(float("nan"))


def test_normalize_obs():
    obs = Observation(16, 16, 25, 25, 25, -7.5, 0, 0)
    z = normalize_obs(obs)
    assert z[0] == pytest.approx(0.32)
    assert z[3] == pytest.approx(1.0)
    assert z[5] == pytest.approx(-1.0)
    assert denormalize_obs(z) == pytest.approx(obs.as_array())
    assert OBS_SCALE.shape == (8,)


def test_discounted_return_examples():
    assert discounted_return([15, 15], 1.0) == 30
    assert discounted_return([-3000], 0.5) == -3000
    g = 0.99999
    closed = 15 * (1 - g ** 1500) / (1 - g)
    direct = sum(15 * g ** k for k in range(1500))
    assert discounted_return([15] * 1500, g) == pytest.approx(closed, rel=1e-12)
    assert closed == pytest.approx(direct, rel=1e-12)
    with pytest.raises(ValueError):
        discounted_return([1.0], 1.5)


def test_scenario_json_round_trip(tmp_path):
    cfg = make_scenario("train_random")
    path = tmp_path / "s.json"
    cfg.to_json(path)
    back = ScenarioConfig.from_json(path)
    assert back == cfg
    assert ScenarioConfig.from_json(cfg.to_json()) == cfg
    with pytest.raises(ValueError):
        ScenarioConfig.from_dict({**json.loads(cfg.to_json()), "bogus": 1})


def test_deterministic_collapses_noise():
    cfg = make_scenario("train_random").deterministic()
    assert cfg.brake_onset == Uniform(1.25, 1.25)
    assert all(d.std == 0.0 for d in cfg.init_positions)


def test_ego_index_must_be_middle():
    with pytest.raises(ValueError):
        PlatoonEnv(make_scenario("brake1"), ego_index=0)
