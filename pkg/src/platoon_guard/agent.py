"""DDPG agent for the ego acceleration policy.

The agent follows the scikit-learn estimator conventions: hyperparameters are
constructor arguments (so ``get_params``/``set_params``/``clone`` work),
``fit`` trains on a scenario and ``predict`` maps raw observations to
accelerations.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_is_fitted

from .env import (OBS_SCALE, REWARD_SAFE, PlatoonEnv, ScenarioConfig, discounted_return, make_scenario,
                  normalize_obs)
from .nets import Adam, DenseNet, soft_update
from .replay import ReplayBuffer
from .validation import check_observations

log = logging.getLogger(__name__)

CHECKPOINT_VERSION = 1
OBS_DIM = 8
ACT_DIM = 1


def noise_std(noise_std0: float, decay: float, step: int) -> float:
    return noise_std0 * decay ** step


def explore_action(actor_out: float, step_count: int, rng: np.random.Generator,
                   noise_std0: float = 1.0, decay: float = 0.9995,
                   a_min: float = -7.5, a_max: float = 3.0) -> float:
    """Gaussian exploration around the actor output, clipped to the action range."""
    std = noise_std(noise_std0, decay, step_count)
    a = actor_out + (rng.normal(0.0, std) if std > 0 else 0.0)
    return float(np.clip(a, a_min, a_max))


@dataclass
class TrainingLog:
    returns: list = field(default_factory=list)
    discounted_returns: list = field(default_factory=list)
    lengths: list = field(default_factory=list)
    collided: list = field(default_factory=list)
    critic_loss: list = field(default_factory=list)
    actor_objective: list = field(default_factory=list)
    noise_std: list = field(default_factory=list)
    scenario: list = field(default_factory=list)

    def moving_average(self, window: int = 30) -> np.ndarray:
        r = np.asarray(self.returns, dtype=float)
        if len(r) < window:
            return np.empty(0)
        c = np.cumsum(np.insert(r, 0, 0.0))
        return (c[window:] - c[:-window]) / window

    def first_episode_reaching(self, threshold: float, window: int = 30):
        """1-based episode index at which the moving average first reaches ``threshold``."""
        ma = self.moving_average(window)
        hits = np.flatnonzero(ma >= threshold)
        return None if hits.size == 0 else int(hits[0]) + window

    def to_dict(self):
        return asdict(self)

    def to_json(self, path=None):
        text = json.dumps(self.to_dict())
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, d):
        return cls(**d)


class DDPGAgent(BaseEstimator):
    """Actor-critic agent with target networks, replay and decaying noise.

    Parameters
    ----------
    gamma, tau, lr_actor, lr_critic, batch_size, buffer_capacity :
        Learning hyperparameters.
    hidden : tuple of int
        Hidden layer widths shared by actor and critic.
    noise_std0, noise_decay :
        Exploration noise std (m/s^2) and its decay per agent decision.
    action_low, action_high :
        Acceleration range of the actor output (m/s^2).
    action_repeat :
        Simulation steps each chosen action is held for. Transitions span one
        decision, so the critic discounts by ``gamma ** action_repeat``.
    reward_offset, reward_scale :
        Critic-side reward transform ``(r - reward_offset) * reward_scale``.
        Episode returns are always reported in raw environment rewards.
    train_every :
        Decisions between gradient updates.
    warmup :
        Minimum buffer size before updates start.
    explore_episodes :
        Number of initial episodes that use the randomly braking follower.
    actor_reg :
        Weight of a quadratic penalty on the actor's output pre-activation,
        which keeps the policy off the flat tails of the tanh.
    dtype : {"float32", "float64"}
        Floating point type used for network arithmetic.
    random_state : int or None
    """

    def __init__(self, gamma=0.99999, tau=0.005, lr_actor=1e-3, lr_critic=2e-3,
                 batch_size=512, buffer_capacity=10000, hidden=(256, 256, 256),
                 noise_std0=1.0, noise_decay=0.9995, action_low=-7.5, action_high=3.0,
                 action_repeat=25, reward_offset=15.0, reward_scale=1.0 / 3000.0,
                 train_every=1, warmup=512, explore_episodes=50, actor_reg=0.01,
                 dtype="float32", random_state=None):
        self.gamma = gamma
        self.tau = tau
        self.lr_actor = lr_actor
        self.lr_critic = lr_critic
        self.batch_size = batch_size
        self.buffer_capacity = buffer_capacity
        self.hidden = hidden
        self.noise_std0 = noise_std0
        self.noise_decay = noise_decay
        self.action_low = action_low
        self.action_high = action_high
        self.action_repeat = action_repeat
        self.reward_offset = reward_offset
        self.reward_scale = reward_scale
        self.train_every = train_every
        self.warmup = warmup
        self.explore_episodes = explore_episodes
        self.actor_reg = actor_reg
        self.dtype = dtype
        self.random_state = random_state

    # -- setup -----------------------------------------------------------
    def _check_params(self):
        if not 0.0 < self.gamma < 1.0:
            raise ValueError(f"gamma must lie in (0, 1), got {self.gamma}")
        if not 0.0 < self.tau < 1.0:
            raise ValueError(f"tau must lie in (0, 1), got {self.tau}")
        for name in ("lr_actor", "lr_critic", "batch_size", "buffer_capacity",
                     "noise_decay", "train_every", "action_repeat", "reward_scale"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.noise_std0 < 0:
            raise ValueError("noise_std0 must be non-negative")
        if not self.action_low < self.action_high:
            raise ValueError("action_low must be below action_high")

    def initialize(self):
        """Build fresh networks, optimisers, buffer and random streams."""
        self._check_params()
        seeds = np.random.SeedSequence(self.random_state).spawn(4)
        init_rng, self.noise_rng_, buf_rng, self.env_rng_ = (np.random.default_rng(s) for s in seeds)
        sizes = list(self.hidden)
        # final bias puts the initial policy at zero acceleration
        zero_u = np.arctanh(2.0 * (0.0 - self.action_low) / (self.action_high - self.action_low) - 1.0)
        self.actor_ = DenseNet([OBS_DIM, *sizes, ACT_DIM], "tanh",
                               (self.action_low, self.action_high), rng=init_rng,
                               final_scale=0.01, final_bias=zero_u, dtype=self.dtype)
        self.critic_ = DenseNet([OBS_DIM + ACT_DIM, *sizes, 1], "linear", rng=init_rng,
                                dtype=self.dtype)
        self.actor_target_ = self.actor_.copy()
        self.critic_target_ = self.critic_.copy()
        self.actor_opt_ = Adam(self.actor_.params, lr=self.lr_actor)
        self.critic_opt_ = Adam(self.critic_.params, lr=self.lr_critic)
        self.buffer_ = ReplayBuffer(self.buffer_capacity, OBS_DIM, ACT_DIM, rng=buf_rng)
        self.total_steps_ = 0
        return self

    @property
    def _half_range(self):
        return 0.5 * (self.action_high - self.action_low)

    @property
    def _mid(self):
        return 0.5 * (self.action_high + self.action_low)

    def _norm_action(self, a):
        return (np.asarray(a, dtype=float) - self._mid) / self._half_range

    # -- policy ----------------------------------------------------------
    def act(self, obs) -> float:
        """Noise-free acceleration for one raw observation."""
        check_is_fitted(self, "actor_")
        return float(self.actor_.forward(normalize_obs(obs), cache=False)[0])

    def predict(self, X) -> np.ndarray:
        check_is_fitted(self, "actor_")
        X = check_observations(X)
        return self.actor_.forward(X / OBS_SCALE, cache=False)[:, 0]

    def q_value(self, X, actions) -> np.ndarray:
        check_is_fitted(self, "critic_")
        X = check_observations(X)
        inp = np.hstack([X / OBS_SCALE, self._norm_action(actions).reshape(-1, 1)])
        return self.critic_.forward(inp, cache=False)[:, 0]

    # -- learning --------------------------------------------------------
    @property
    def decision_gamma(self) -> float:
        return self.gamma ** self.action_repeat

    def transform_reward(self, rewards) -> float:
        """Discounted sum of transformed per-step rewards within one decision."""
        total = 0.0
        for r in reversed(list(rewards)):
            total = (r - self.reward_offset) * self.reward_scale + self.gamma * total
        return total

    def critic_targets(self, r, s_next, done) -> np.ndarray:
        """Bellman targets ``r + gamma_d * (1 - done) * Q'(s', mu'(s'))``.

        ``r`` holds already transformed decision rewards, ``gamma_d`` is the
        per-decision discount.
        """
        a_next = self.actor_target_.forward(s_next, cache=False)
        q_next = self.critic_target_.forward(
            np.hstack([s_next, self._norm_action(a_next)]), cache=False)[:, 0]
        return np.minimum(r + self.decision_gamma * (1.0 - done) * q_next, self.q_upper_bound)

    @property
    def q_upper_bound(self) -> float:
        """Largest achievable value: the best per-step reward earned forever."""
        best = (REWARD_SAFE - self.reward_offset) * self.reward_scale
        if best <= 0.0:
            return 0.0
        return best / (1.0 - self.gamma)

    def critic_update(self, batch) -> float:
        s, a, r, s_next, done = batch
        if len(s) == 0:
            raise ValueError("empty batch")
        y = self.critic_targets(r, s_next, done)
        q = self.critic_.forward(np.hstack([s, self._norm_action(a).reshape(len(s), -1)]))[:, 0]
        err = q - y
        grads, _ = self.critic_.backward((2.0 / len(s)) * err[:, None])
        self.critic_opt_.step(grads)
        return float(np.mean(err * err))

    def actor_gradient(self, s):
        """Gradient of the actor objective w.r.t. the actor parameters.

        The objective is ``mean Q(s, mu(s)) - actor_reg * mean(u**2)`` with
        ``u`` the output pre-activation; the critic is held fixed.
        """
        if len(s) == 0:
            raise ValueError("empty batch")
        n = len(s)
        a = self.actor_.forward(s)
        q = self.critic_.forward(np.hstack([s, self._norm_action(a)]))[:, 0]
        _, dinp = self.critic_.backward(np.full((n, 1), 1.0 / n))
        dq_da = dinp[:, OBS_DIM:] / self._half_range
        objective = float(np.mean(q))
        preact_grad = None
        if self.actor_reg:
            u = self.actor_.preactivation
            objective -= self.actor_reg * float(np.mean(u * u))
            preact_grad = (-2.0 * self.actor_reg / n) * u
        grads, _ = self.actor_.backward(dq_da, preact_grad)
        return objective, grads

    def actor_update(self, batch) -> float:
        objective, grads = self.actor_gradient(batch[0])
        self.actor_opt_.step([-g for g in grads])
        return objective

    def update(self):
        batch = self.buffer_.sample(self.batch_size)
        loss = self.critic_update(batch)
        objective = self.actor_update(batch)
        soft_update(self.actor_target_, self.actor_, self.tau)
        soft_update(self.critic_target_, self.critic_, self.tau)
        return loss, objective

    def fit(self, X=None, y=None, episodes=2000, stop_at=None, window=30, callback=None):
        """Train on scenario ``X`` (default: the randomised training scenario).

        ``stop_at`` ends training once the ``window``-episode moving average of
        undiscounted returns reaches that value.
        """
        self.initialize()
        scenario = X if X is not None else make_scenario("train_random")
        self.training_log_ = train(self, scenario, episodes, stop_at=stop_at,
                                   window=window, callback=callback)
        return self

    # -- persistence -----------------------------------------------------
    def checkpoint_dict(self) -> dict:
        check_is_fitted(self, "actor_")
        params = self.get_params()
        params["hidden"] = list(params["hidden"])
        return {
            "version": CHECKPOINT_VERSION,
            "params": params,
            "obs_scale": OBS_SCALE.tolist(),
            "action_range": [self.action_low, self.action_high],
            "actor": self.actor_.to_dict(),
            "critic": self.critic_.to_dict(),
        }

    def save(self, path):
        with open(path, "w") as fh:
            json.dump(self.checkpoint_dict(), fh)

    @classmethod
    def load(cls, path) -> "DDPGAgent":
        try:
            with open(path) as fh:
                data = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ValueError(f"cannot read checkpoint {path}: {exc}") from exc
        return cls.from_checkpoint_dict(data)

    @classmethod
    def from_checkpoint_dict(cls, data) -> "DDPGAgent":
        if data.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {data.get('version')!r}")
        if not np.allclose(data["obs_scale"], OBS_SCALE):
            raise ValueError("checkpoint normalisation constants do not match")
        params = dict(data["params"])
        params["hidden"] = tuple(params["hidden"])
        agent = cls(**params).initialize()
        agent.actor_ = DenseNet.from_dict(data["actor"])
        agent.critic_ = DenseNet.from_dict(data["critic"])
        agent.actor_target_ = agent.actor_.copy()
        agent.critic_target_ = agent.critic_.copy()
        agent.actor_opt_ = Adam(agent.actor_.params, lr=agent.lr_actor)
        agent.critic_opt_ = Adam(agent.critic_.params, lr=agent.lr_critic)
        return agent


def exploration_scenario(scenario: ScenarioConfig) -> ScenarioConfig:
    return replace(scenario, follower_policy="random_decel")


def train(agent: DDPGAgent, scenario: ScenarioConfig, episodes: int, stop_at=None,
          window=30, learn=True, callback=None) -> TrainingLog:
    """Run the reset/step loop, storing transitions and updating the agent.

    The first ``agent.explore_episodes`` episodes use a follower that brakes
    at a random time and rate; the rest use ``scenario`` as given. Episode
    truncation at the horizon is not treated as terminal for bootstrapping.
    """
    if not hasattr(agent, "actor_"):
        agent.initialize()
    envs = {
        "explore": PlatoonEnv(exploration_scenario(scenario)),
        "main": PlatoonEnv(scenario),
    }
    for env in envs.values():
        env.rng = agent.env_rng_
    logbook = TrainingLog()
    a_lo, a_hi = agent.action_low, agent.action_high
    for ep in range(episodes):
        key = "explore" if ep < agent.explore_episodes else "main"
        env = envs[key]
        obs = normalize_obs(env.reset())
        rewards, losses, objectives = [], [], []
        done = False
        while not done:
            a_pol = float(agent.actor_.forward(obs, cache=False)[0])
            a = explore_action(a_pol, agent.total_steps_, agent.noise_rng_,
                               agent.noise_std0, agent.noise_decay, a_lo, a_hi)
            chunk = []
            for _ in range(agent.action_repeat):
                res = env.step(a)
                chunk.append(res.reward)
                if res.done:
                    break
            done = res.done
            rewards.extend(chunk)
            obs_next = normalize_obs(res.observation)
            agent.buffer_.push(obs, a, agent.transform_reward(chunk),
                               obs_next, res.info["terminal"])
            agent.total_steps_ += 1
            if (learn and len(agent.buffer_) >= max(agent.warmup, 1)
                    and agent.total_steps_ % agent.train_every == 0):
                loss, objective = agent.update()
                losses.append(loss)
                objectives.append(objective)
            obs = obs_next
        logbook.returns.append(float(sum(rewards)))
        logbook.discounted_returns.append(discounted_return(rewards, agent.gamma))
        logbook.lengths.append(len(rewards))
        logbook.collided.append(bool(res.info["terminal"]))
        logbook.critic_loss.append(float(np.mean(losses)) if losses else float("nan"))
        logbook.actor_objective.append(float(np.mean(objectives)) if objectives else float("nan"))
        logbook.noise_std.append(noise_std(agent.noise_std0, agent.noise_decay, agent.total_steps_))
        logbook.scenario.append(key)
        log.debug("episode %d return %.0f len %d", ep + 1, logbook.returns[-1], len(rewards))
        if callback is not None:
            callback(ep, logbook)
        if stop_at is not None and ep + 1 >= window:
            if np.mean(logbook.returns[-window:]) >= stop_at:
                break
    return logbook
