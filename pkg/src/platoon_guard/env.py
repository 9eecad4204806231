"""Car-following MDP around the chain simulator.

A chain is ``[leader, middle..., follower]``. The leader runs a scripted brake
manoeuvre, the last follower runs the TTC baseline (optionally with an extra
random brake), and the middle vehicles are driven by whatever controller the
caller plugs in. :class:`PlatoonEnv` exposes one middle vehicle as the RL ego
through a ``reset``/``step`` interface.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Callable, Sequence

import numpy as np

from .baseline import BaselineControllerState, baseline_action, scripted_leader_action
from .estimation import KalmanTrack, Side, kf_predict, kf_update, neighbor_position
from .sim import VehicleSpec, detect_collision, make_chain

REWARD_SAFE = 15.0
REWARD_COLLISION = -3000.0

# distance, speed and acceleration scales used to normalise observations
OBS_SCALE = np.array([50.0, 50.0, 25.0, 25.0, 25.0, 7.5, 7.5, 7.5])

SCENARIO_IDS = ("brake1", "brake2", "multirl", "train_random")


@dataclass(frozen=True)
class Normal:
    mean: float
    std: float = 0.0

    def sample(self, rng: np.random.Generator) -> float:
        if self.std == 0.0:
            return float(self.mean)
        return float(rng.normal(self.mean, self.std))


@dataclass(frozen=True)
class Uniform:
    low: float
    high: float

    def sample(self, rng: np.random.Generator) -> float:
        if self.low == self.high:
            return float(self.low)
        return float(rng.uniform(self.low, self.high))


@dataclass(frozen=True)
class Observation:
    d_fm: float
    d_mr: float
    v_f: float
    v_m: float
    v_r: float
    a_f: float
    a_m: float
    a_r: float

    def as_array(self) -> np.ndarray:
        return np.array([self.d_fm, self.d_mr, self.v_f, self.v_m, self.v_r,
                         self.a_f, self.a_m, self.a_r])

    @classmethod
    def from_array(cls, arr) -> "Observation":
        arr = np.asarray(arr, dtype=float).ravel()
        if arr.shape != (8,):
            raise ValueError(f"observation needs 8 components, got {arr.shape}")
        return cls(*map(float, arr))


def normalize_obs(obs) -> np.ndarray:
    arr = obs.as_array() if isinstance(obs, Observation) else np.asarray(obs, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise ValueError("observation must be finite")
    return arr / OBS_SCALE


def denormalize_obs(arr) -> np.ndarray:
    return np.asarray(arr, dtype=float) * OBS_SCALE


def discounted_return(rewards: Sequence[float], gamma: float) -> float:
    if not 0.0 <= gamma <= 1.0:
        raise ValueError(f"gamma must lie in [0, 1], got {gamma}")
    total = 0.0
    for r in reversed(list(rewards)):
        total = r + gamma * total
    return total


@dataclass
class ScenarioConfig:
    """Everything needed to sample and run one episode.

    Distances in m, speeds in m/s, accelerations in m/s^2, times in s.
    ``Normal(mean, std)`` takes a standard deviation.
    """

    name: str
    vehicle_classes: list[str]
    init_positions: list[Normal]
    init_speeds: list[Normal]
    brake_onset: Uniform = Uniform(1.0, 1.0)
    brake_decel: Normal = Normal(-3.0)
    follower_policy: str = "baseline"
    follower_brake_onset: Uniform = Uniform(1.0, 1.5)
    follower_brake_decel: Normal = Normal(-4.0, 1.5)
    follower_classes: list[str] | None = None
    cruise_accel_noise: Normal = Normal(0.0)
    horizon_steps: int = 1500
    dt: float = 0.01
    nominal_speed: float = 25.0
    oracle_sensing: bool = False
    kf_jerk_std: float = 2.0
    kf_meas_std: float = 0.05
    vehicle_overrides: dict = field(default_factory=dict)
    max_reset_retries: int = 100

    def __post_init__(self):
        n = len(self.vehicle_classes)
        if n < 3:
            raise ValueError("a scenario needs a leader, at least one middle vehicle and a follower")
        if len(self.init_positions) != n or len(self.init_speeds) != n:
            raise ValueError("one position and one speed distribution per vehicle")
        if self.follower_policy not in ("baseline", "random_decel"):
            raise ValueError(f"unknown follower policy {self.follower_policy!r}")
        if self.horizon_steps <= 0 or self.dt <= 0:
            raise ValueError("horizon_steps and dt must be positive")

    @property
    def n_vehicles(self) -> int:
        return len(self.vehicle_classes)

    def spec_for(self, vclass: str) -> VehicleSpec:
        return VehicleSpec.of(vclass, **self.vehicle_overrides.get(vclass, {}))

    def deterministic(self) -> "ScenarioConfig":
        """Copy with every random draw collapsed onto its mean."""
        mid_onset = 0.5 * (self.brake_onset.low + self.brake_onset.high)
        f_onset = 0.5 * (self.follower_brake_onset.low + self.follower_brake_onset.high)
        return replace(
            self,
            init_positions=[Normal(d.mean) for d in self.init_positions],
            init_speeds=[Normal(d.mean) for d in self.init_speeds],
            brake_onset=Uniform(mid_onset, mid_onset),
            brake_decel=Normal(self.brake_decel.mean),
            follower_brake_onset=Uniform(f_onset, f_onset),
            follower_brake_decel=Normal(self.follower_brake_decel.mean),
            cruise_accel_noise=Normal(self.cruise_accel_noise.mean),
            follower_classes=None,
        )

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown scenario fields: {sorted(unknown)}")
        data = dict(data)
        for key in ("init_positions", "init_speeds"):
            if key in data:
                data[key] = [_normal(d) for d in data[key]]
        for key in ("brake_decel", "follower_brake_decel", "cruise_accel_noise"):
            if key in data:
                data[key] = _normal(data[key])
        for key in ("brake_onset", "follower_brake_onset"):
            if key in data:
                data[key] = _uniform(data[key])
        return cls(**data)

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_json(cls, text_or_path) -> "ScenarioConfig":
        text = str(text_or_path)
        if not text.lstrip().startswith("{"):
            with open(text) as fh:
                text = fh.read()
        return cls.from_dict(json.loads(text))


def _normal(d) -> Normal:
    if isinstance(d, Normal):
        return d
    if isinstance(d, (int, float)):
        return Normal(float(d))
    return Normal(float(d["mean"]), float(d.get("std", 0.0)))


def _uniform(d) -> Uniform:
    if isinstance(d, Uniform):
        return d
    if isinstance(d, (int, float)):
        return Uniform(float(d), float(d))
    return Uniform(float(d["low"]), float(d["high"]))


def make_scenario(scenario_id: str, **overrides) -> ScenarioConfig:
    """Build one of the named scenarios.

    ``brake1``: light leader, light ego, heavy follower. ``brake2``: all light.
    ``multirl``: light leader, ``n_middle`` light middles (default 3), heavy
    follower. These three start at 25 m/s with 16 m gaps and the leader brakes
    at -3 m/s^2 from step 100; they are deterministic unless noise is
    overridden. ``train_random`` is the randomised three-vehicle training
    distribution; its follower is heavy or light with equal probability.
    """
    sid = scenario_id.lower().replace("-", "_")
    n_middle = overrides.pop("n_middle", 3)
    speed = 25.0
    if sid in ("brake1", "brake2", "multirl"):
        if sid == "brake1":
            classes = ["light", "light", "heavy"]
        elif sid == "brake2":
            classes = ["light", "light", "light"]
        else:
            classes = ["light"] * (1 + n_middle) + ["heavy"]
        n = len(classes)
        base = dict(
            name=sid,
            vehicle_classes=classes,
            init_positions=[Normal(18.0 * (n - 1 - i)) for i in range(n)],
            init_speeds=[Normal(speed)] * n,
            brake_onset=Uniform(1.0, 1.0),
            brake_decel=Normal(-3.0),
        )
    elif sid == "train_random":
        base = dict(
            name=sid,
            vehicle_classes=["light", "light", "heavy"],
            init_positions=[Normal(36.0, 0.5), Normal(18.0, 0.5), Normal(0.0, 0.5)],
            init_speeds=[Normal(speed, 1.0)] * 3,
            brake_onset=Uniform(1.0, 1.5),
            brake_decel=Normal(-3.0, 0.2),
            follower_classes=["light", "heavy"],
            cruise_accel_noise=Normal(0.0, 0.01),
        )
    else:
        raise ValueError(f"unknown scenario {scenario_id!r}; expected one of {SCENARIO_IDS}")
    base.update(overrides)
    return ScenarioConfig.from_dict(base)


@dataclass
class StepResult:
    observation: Observation
    reward: float
    done: bool
    info: dict


MiddlePolicy = Callable[[Observation], float]


class PlatoonSim:
    """Stateful rollout of one sampled chain.

    ``step`` takes one command per middle vehicle; ``None`` entries fall back
    to the TTC baseline for that vehicle.
    """

    def __init__(self, config: ScenarioConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.rng = rng if rng is not None else np.random.default_rng()
        self._sample()

    def _sample(self):
        cfg, rng = self.config, self.rng
        classes = list(cfg.vehicle_classes)
        if cfg.follower_classes:
            classes[-1] = cfg.follower_classes[int(rng.integers(len(cfg.follower_classes)))]
        self.specs = [cfg.spec_for(c) for c in classes]
        for _ in range(max(1, cfg.max_reset_retries)):
            xs = np.array([d.sample(rng) for d in cfg.init_positions])
            vs = np.array([max(0.0, d.sample(rng)) for d in cfg.init_speeds])
            order = np.argsort(-xs, kind="stable")
            xs, vs = xs[order], vs[order]
            lengths = np.array([s.length for s in self.specs])
            if np.all(xs[:-1] - lengths[:-1] - xs[1:] > 0):
                break
        else:
            raise RuntimeError("could not sample a collision-free initial chain")
        self.chain = make_chain(self.specs, xs, vs, cfg.dt)
        self.brake_step = int(round(cfg.brake_onset.sample(rng) / cfg.dt))
        self.brake_decel = cfg.brake_decel.sample(rng)
        self.follower_brake_step = None
        self.follower_brake_decel = 0.0
        if cfg.follower_policy == "random_decel":
            f_spec = self.specs[-1]
            self.follower_brake_step = int(round(cfg.follower_brake_onset.sample(rng) / cfg.dt))
            self.follower_brake_decel = min(0.0, max(-f_spec.max_decel,
                                                     cfg.follower_brake_decel.sample(rng)))
        n = len(self.specs)
        self.ctrl = [BaselineControllerState() for _ in range(n)]
        self.front_tracks: list[KalmanTrack | None] = [None] * n
        self.rear_tracks: list[KalmanTrack | None] = [None] * n
        for i in range(1, n):
            self.front_tracks[i] = self._new_track(i, Side.FRONT)
        for i in range(1, n - 1):
            self.rear_tracks[i] = self._new_track(i, Side.REAR)
        self.t = 0
        self.collisions: list[tuple[int, int]] = []

    def _new_track(self, i, side):
        g = self.chain.gap(i - 1) if side is Side.FRONT else self.chain.gap(i)
        z = neighbor_position(self.chain.states[i], self.specs[i], g, side)
        return KalmanTrack.initial(z, self.config.nominal_speed,
                                   process_jerk_std=self.config.kf_jerk_std,
                                   meas_std=self.config.kf_meas_std)

    @property
    def n_vehicles(self) -> int:
        return len(self.specs)

    @property
    def middle_indices(self) -> range:
        return range(1, self.n_vehicles - 1)

    def front_estimate(self, i: int) -> tuple[float, float]:
        """(velocity, acceleration) of vehicle ``i``'s leader as seen by ``i``."""
        if self.config.oracle_sensing:
            s = self.chain.states[i - 1]
            return s.v, s.a
        tr = self.front_tracks[i]
        return tr.velocity, tr.acceleration

    def rear_estimate(self, i: int) -> tuple[float, float]:
        if self.config.oracle_sensing:
            s = self.chain.states[i + 1]
            return s.v, s.a
        tr = self.rear_tracks[i]
        return tr.velocity, tr.acceleration

    def observe(self, i: int) -> Observation:
        if i not in self.middle_indices:
            raise IndexError(f"vehicle {i} is not a middle vehicle")
        v_f, a_f = self.front_estimate(i)
        v_r, a_r = self.rear_estimate(i)
        me = self.chain.states[i]
        return Observation(self.chain.gap(i - 1), self.chain.gap(i), v_f, me.v, v_r,
                           a_f, me.a, a_r)

    def _cruise_noise(self) -> float:
        return self.config.cruise_accel_noise.sample(self.rng)

    def _baseline(self, i: int) -> float:
        g = max(0.0, self.chain.gap(i - 1))
        v_front, _ = self.front_estimate(i)
        a, self.ctrl[i] = baseline_action(self.ctrl[i], g, self.chain.states[i].v,
                                          v_front, self.specs[i])
        return a

    def commands(self, middle_cmds: Sequence[float | None]) -> list[float]:
        n = self.n_vehicles
        if len(middle_cmds) != n - 2:
            raise ValueError(f"expected {n - 2} middle commands, got {len(middle_cmds)}")
        lead = scripted_leader_action(self.t, self.brake_step, self.brake_decel)
        if self.t < self.brake_step:
            lead += self._cruise_noise()
        cmds = [lead]
        for i, c in zip(self.middle_indices, middle_cmds):
            cmds.append(self._baseline(i) if c is None else float(c))
        last = n - 1
        a_last = self._baseline(last)
        if self.follower_brake_step is not None and self.t >= self.follower_brake_step:
            a_last = min(a_last, self.follower_brake_decel)
        if a_last == 0.0:
            a_last = self._cruise_noise()
        cmds.append(a_last)
        return cmds

    def step(self, middle_cmds: Sequence[float | None]) -> list[tuple[int, int]]:
        """Advance one step; returns the colliding pairs after the move."""
        cmds = self.commands(middle_cmds)
        self.chain = self.chain.step(cmds)
        self.t += 1
        self.collisions = detect_collision(self.chain)
        self._update_tracks()
        return self.collisions

    def _update_tracks(self):
        # raw gaps so that tracking survives overlap when a rollout is continued
        dt = self.config.dt
        states = self.chain.states
        for i in range(1, self.n_vehicles):
            z = states[i].x + self.chain.gap(i - 1)
            self.front_tracks[i] = kf_update(kf_predict(self.front_tracks[i], dt), z)
            if self.rear_tracks[i] is not None:
                z = states[i].x - self.specs[i].length - self.chain.gap(i)
                self.rear_tracks[i] = kf_update(kf_predict(self.rear_tracks[i], dt), z)


class PlatoonEnv:
    """Single-ego episodic environment with the 15 / -3000 reward.

    The ego is middle vehicle ``ego_index``; any other middle vehicles are
    driven by ``co_policy`` (an observation -> acceleration callable) or, when
    that is ``None``, by the TTC baseline. Episodes end on the first collision
    anywhere in the chain or after ``horizon_steps`` steps.
    """

    def __init__(self, config: ScenarioConfig, ego_index: int = 1,
                 co_policy: MiddlePolicy | None = None, seed=None):
        if not 1 <= ego_index <= config.n_vehicles - 2:
            raise ValueError(f"ego_index {ego_index} is not a middle vehicle")
        self.config = config
        self.ego_index = ego_index
        self.co_policy = co_policy
        self.rng = np.random.default_rng(seed)
        self.sim: PlatoonSim | None = None
        self.done = True

    @property
    def ego_spec(self) -> VehicleSpec:
        return self.config.spec_for(self.config.vehicle_classes[self.ego_index])

    @property
    def action_range(self) -> tuple[float, float]:
        spec = self.ego_spec
        return -spec.max_decel, spec.max_accel

    def reset(self, seed=None) -> Observation:
        if seed is not None:
            self.rng = np.random.default_rng(seed)
        self.sim = PlatoonSim(self.config, self.rng)
        self.done = False
        return self.sim.observe(self.ego_index)

    def step(self, a_cmd: float) -> StepResult:
        if self.sim is None or self.done:
            raise RuntimeError("step() called on a finished episode; call reset() first")
        if not math.isfinite(a_cmd):
            raise ValueError("action must be finite")
        sim = self.sim
        cmds = []
        for i in sim.middle_indices:
            if i == self.ego_index:
                cmds.append(float(a_cmd))
            elif self.co_policy is not None:
                cmds.append(self.co_policy(sim.observe(i)))
            else:
                cmds.append(None)
        collisions = sim.step(cmds)
        reward = REWARD_COLLISION if collisions else REWARD_SAFE
        truncated = not collisions and sim.t >= self.config.horizon_steps
        self.done = bool(collisions) or truncated
        info = {"collisions": collisions, "states": list(sim.chain.states), "t": sim.t,
                "terminal": bool(collisions), "truncated": truncated}
        return StepResult(sim.observe(self.ego_index), reward, self.done, info)
