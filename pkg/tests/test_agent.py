import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from sklearn.base import clone

from platoon_guard.agent import DDPGAgent, TrainingLog, explore_action, noise_std, train
from platoon_guard.env import Normal, make_scenario
from platoon_guard.replay import ReplayBuffer

SMALL = dict(hidden=(6, 6), batch_size=8, warmup=8, dtype="float64")


def _constant_net(net, value):
    net.set_params([np.zeros_like(p) for p in net.params])
    net.biases[-1][:] = value


def _raw_agent(**kw):
    return DDPGAgent(action_repeat=1, reward_offset=0.0, reward_scale=1.0, random_state=0,
                     **{**SMALL, **kw}).initialize()


def test_critic_target_bootstrap():
    ag = _raw_agent()
    _constant_net(ag.critic_target_, 1000.0)
    y = ag.critic_targets(np.array([15.0]), np.zeros((1, 8)), np.array([0.0]))
    assert y[0] == pytest.approx(1014.99, abs=1e-9)


def test_critic_target_terminal():
    ag = _raw_agent()
    _constant_net(ag.critic_target_, 1000.0)
    y = ag.critic_targets(np.array([-3000.0]), np.zeros((1, 8)), np.array([1.0]))
    assert y[0] == -3000.0


def test_critic_target_is_capped_at_best_value():
    ag = DDPGAgent(random_state=0, **SMALL).initialize()
    assert ag.q_upper_bound == 0.0
    _constant_net(ag.critic_target_, 5.0)
    y = ag.critic_targets(np.array([0.0]), np.zeros((1, 8)), np.array([0.0]))
    assert y[0] == 0.0


def test_identical_batch_loss():
    ag = _raw_agent()
    s = np.full((4, 8), 0.3)
    a = np.full((4, 1), 0.1)
    r = np.full(4, 2.0)
    done = np.ones(4)
    q = ag.critic_.forward(np.hstack([s[:1], ag._norm_action(a[:1])]), cache=False)[0, 0]
    loss = ag.critic_update((s, a, r, s, done))
    assert loss == pytest.approx((q - 2.0) ** 2, rel=1e-12)


def test_reward_transform():
    ag = DDPGAgent(action_repeat=2, gamma=0.5)
    assert ag.transform_reward([15.0, 15.0]) == 0.0
    assert ag.transform_reward([15.0, -3000.0]) == pytest.approx(0.5 * (-3015.0 / 3000.0))
    assert ag.decision_gamma == 0.25


def test_actor_gradient_matches_finite_differences():
    ag = _raw_agent(actor_reg=0.05)
    s = np.random.default_rng(0).normal(size=(5, 8))
    _, grads = ag.actor_gradient(s)
    h = 1e-6
    worst = 0.0
    for p, g in zip(ag.actor_.params, grads):
        num = np.zeros_like(p)
        it = np.nditer(p, flags=["multi_index"])
        for _ in it:
            i = it.multi_index
            old = p[i]
            p[i] = old + h
            fp, _ = ag.actor_gradient(s)
            p[i] = old - h
            fm, _ = ag.actor_gradient(s)
            p[i] = old
            num[i] = (fp - fm) / (2 * h)
        worst = max(worst, np.linalg.norm(g - num) / max(np.linalg.norm(g) + np.linalg.norm(num), 1e-12))
    assert worst < 1e-3


def test_constant_critic_gives_zero_actor_gradient():
    ag = _raw_agent(actor_reg=0.0)
    _constant_net(ag.critic_, 3.0)
    obj, grads = ag.actor_gradient(np.random.default_rng(1).normal(size=(6, 8)))
    assert obj == pytest.approx(3.0)
    assert all(np.all(g == 0) for g in grads)


def test_repeated_sample_gradient_equals_single():
    ag = _raw_agent()
    s = np.random.default_rng(2).normal(size=(1, 8))
    _, g1 = ag.actor_gradient(s)
    _, g4 = ag.actor_gradient(np.repeat(s, 4, axis=0))
    for a, b in zip(g1, g4):
        assert a == pytest.approx(b, rel=1e-10, abs=1e-14)


def test_initial_policy_outputs_zero_acceleration():
    ag = DDPGAgent(random_state=0, **SMALL).initialize()
    out = ag.predict(np.random.default_rng(0).normal(size=(20, 8)) * 10)
    assert np.abs(out).max() < 0.5


def test_noise_schedule():
    assert noise_std(1.0, 0.9995, 0) == 1.0
    assert noise_std(1.0, 0.9995, 4605) == pytest.approx(0.1, rel=1e-3)


@settings(max_examples=200, deadline=None)
@given(out=st.floats(-20, 20), step=st.integers(0, 10000), seed=st.integers(0, 2**31))
def test_explore_action_within_range(out, step, seed):
    a = explore_action(out, step, np.random.default_rng(seed))
    assert -7.5 <= a <= 3.0


def test_buffer_capped_after_twenty_episodes():
    ag = DDPGAgent(action_repeat=1, explore_episodes=0, random_state=0, hidden=(8,), dtype="float64")
    ag.initialize()
    scenario = make_scenario("brake2", brake_decel=Normal(0.0))
    logbook = train(ag, scenario, 20, learn=False)
    assert sum(logbook.lengths) == 30000
    assert len(ag.buffer_) == 10000


def test_training_is_deterministic_for_a_seed():
    kw = dict(action_repeat=25, explore_episodes=2, random_state=3, **SMALL)
    logs = [train(DDPGAgent(**kw).initialize(), make_scenario("train_random"), 4) for _ in range(2)]
    assert logs[0].to_json() == logs[1].to_json()


def test_sklearn_conventions():
    ag = DDPGAgent(lr_actor=5e-4)
    twin = clone(ag)
    assert twin.get_params() == ag.get_params()
    with pytest.raises(Exception):
        ag.predict(np.zeros((1, 8)))
    fitted = DDPGAgent(random_state=0, **SMALL).initialize()
    with pytest.raises(ValueError):
        fitted.predict(np.zeros((2, 7)))
    with pytest.raises(ValueError):
        fitted.predict(np.full((1, 8), np.nan))


@pytest.mark.parametrize("bad", [dict(gamma=1.0), dict(tau=0.0), dict(batch_size=0),
                                 dict(action_low=3.0, action_high=-7.5)])
def test_invalid_params(bad):
    with pytest.raises(ValueError):
        DDPGAgent(**bad).initialize()


def test_checkpoint_round_trip_exact(tmp_path):
    ag = DDPGAgent(random_state=4, **SMALL).initialize()
    train(ag, make_scenario("train_random"), 2)
    path = tmp_path / "ck.json"
    ag.save(path)
    back = DDPGAgent.load(path)
    X = np.random.default_rng(0).normal(size=(1000, 8)) * 20
    assert np.array_equal(ag.predict(X), back.predict(X))
    assert back.get_params() == ag.get_params()


def test_corrupt_checkpoint(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ValueError):
        DDPGAgent.load(bad)
    with pytest.raises(ValueError):
        DDPGAgent.load(tmp_path / "missing.json")
    with pytest.raises(ValueError):
        DDPGAgent.from_checkpoint_dict({"version": 99})


def test_training_log_helpers():
    lg = TrainingLog(returns=[0.0] * 5 + [22500.0] * 10)
    assert lg.first_episode_reaching(22000, window=10) == 15
    assert lg.first_episode_reaching(22000, window=20) is None
    assert TrainingLog.from_dict(lg.to_dict()) == lg


def test_replay_buffer_fifo():
    buf = ReplayBuffer(3, obs_dim=1, act_dim=1, rng=np.random.default_rng(0))
    for k in range(5):
        buf.push([k], [0], float(k), [k + 1], False)
    assert len(buf) == 3
    assert [buf[i].r for i in range(3)] == [2.0, 3.0, 4.0]
    s, a, r, s2, d = buf.sample(10)
    assert sorted(r) == [2.0, 3.0, 4.0]
    with pytest.raises(ValueError):
        ReplayBuffer(2).sample(1)
