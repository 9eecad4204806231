"""Scenario rollouts, run reports, the open-loop feasibility search and
multi-seed training aggregation."""
from __future__ import annotations

import itertools
import json
import math
import os
import warnings
from dataclasses import asdict, dataclass, field

import numpy as np

from .env import REWARD_COLLISION, REWARD_SAFE, PlatoonSim, ScenarioConfig, make_scenario
from .estimation import KalmanTrack, kf_predict, transition_matrix

LOG_COLUMNS = ("step", "t", "vehicle_id", "x", "v", "a", "gap_ahead")


@dataclass
class TrajectoryLog:
    """Per-step, per-vehicle trace of one rollout plus its outcome.

    ``rows`` has the columns of :data:`LOG_COLUMNS`; ``gap_ahead`` is NaN for
    the lead vehicle. Step 0 is the initial state.
    """

    rows: np.ndarray
    lengths: list = field(default_factory=list)
    classes: list = field(default_factory=list)
    collision_pairs: list = field(default_factory=list)
    collision_step: int | None = None
    episode_return: float | None = None

    @property
    def n_vehicles(self) -> int:
        return int(self.rows[:, 2].max()) + 1 if len(self.rows) else 0

    def column(self, name: str, vehicle: int) -> np.ndarray:
        sel = self.rows[:, 2] == vehicle
        return self.rows[sel, LOG_COLUMNS.index(name)]

    def times(self) -> np.ndarray:
        return self.column("t", 0)


@dataclass
class RunReport:
    scenario: str
    controller: str
    collided: bool
    collision_pairs: list
    collision_step: int | None
    min_gaps: list
    stop_times: list
    episode_return: float

    def to_json(self, path=None) -> str:
        text = json.dumps(asdict(self), indent=2)
        if path is not None:
            with open(path, "w") as fh:
                fh.write(text)
        return text


def episode_return(horizon: int, collision_step: int | None) -> float:
    """Undiscounted return: 15 per safe step, -3000 on the colliding step."""
    if collision_step is None:
        return REWARD_SAFE * horizon
    return REWARD_SAFE * (collision_step - 1) + REWARD_COLLISION


class PolicyController:
    """Drives every middle vehicle with a shared policy, holding each action
    for ``action_repeat`` steps."""

    def __init__(self, policy, action_repeat: int = 1, name: str = "rl"):
        self.policy = policy
        self.action_repeat = int(action_repeat)
        self.name = name
        self._held = {}

    def __call__(self, sim: PlatoonSim) -> list:
        if sim.t % self.action_repeat == 0:
            self._held = {i: float(self.policy(sim.observe(i))) for i in sim.middle_indices}
        return [self._held[i] for i in sim.middle_indices]


def _baseline_controller(sim: PlatoonSim):
    return [None] * (sim.n_vehicles - 2)


def resolve_controller(controller):
    """Map ``"baseline"``, a fitted agent, or a callable onto a rollout controller."""
    if controller is None or controller == "baseline":
        return _baseline_controller, "baseline"
    if hasattr(controller, "act") and hasattr(controller, "action_repeat"):
        return PolicyController(controller.act, controller.action_repeat), "rl"
    if isinstance(controller, PolicyController):
        return controller, controller.name
    if callable(controller):
        return controller, getattr(controller, "__name__", "custom")
    raise ValueError(f"unsupported controller {controller!r}")


def evaluate(scenario, controller="baseline", seed=0, deterministic=True
             ) -> tuple[TrajectoryLog, RunReport]:
    """Roll a scenario out to its horizon under the given middle-vehicle controller.

    The rollout continues through collisions so that chain reactions show up
    in the log; the return is cut at the first collision as in training.
    """
    config = make_scenario(scenario) if isinstance(scenario, str) else scenario
    if deterministic:
        config = config.deterministic()
    ctrl, ctrl_name = resolve_controller(controller)
    sim = PlatoonSim(config, np.random.default_rng(seed))
    n = sim.n_vehicles
    horizon = config.horizon_steps
    rows = np.empty(((horizon + 1) * n, len(LOG_COLUMNS)))
    first_hit: dict[tuple[int, int], int] = {}

    def record(step):
        base = step * n
        states = sim.chain.states
        for i in range(n):
            g = sim.chain.gap(i - 1) if i > 0 else math.nan
            rows[base + i] = (step, step * config.dt, i, states[i].x, states[i].v, states[i].a, g)

    record(0)
    for step in range(1, horizon + 1):
        for pair in sim.step(ctrl(sim)):
            first_hit.setdefault(pair, step)
        record(step)

    collision_step = min(first_hit.values()) if first_hit else None
    pairs = sorted(first_hit, key=lambda p: (first_hit[p], p))
    ret = episode_return(horizon, collision_step)
    log = TrajectoryLog(rows, [s.length for s in sim.specs], [s.vclass.value for s in sim.specs],
                        [list(p) for p in pairs], collision_step, ret)
    report = RunReport(
        scenario=config.name,
        controller=ctrl_name,
        collided=bool(pairs),
        collision_pairs=[list(p) for p in pairs],
        collision_step=collision_step,
        min_gaps=[float(np.min(log.column("gap_ahead", i + 1))) for i in range(n - 1)],
        stop_times=[_stop_time(log, i) for i in range(n)],
        episode_return=ret,
    )
    return log, report


def _stop_time(log: TrajectoryLog, vehicle: int):
    v = log.column("v", vehicle)
    idx = np.flatnonzero(v <= 0.0)
    return None if idx.size == 0 else float(log.column("t", vehicle)[idx[0]])


# -- feasibility search -----------------------------------------------------

@dataclass(frozen=True)
class OpenLoopPlan:
    """Constant cruise, then a constant deceleration from ``onset_step``, and
    optionally a constant acceleration from ``terminal_step``."""

    onset_step: int
    decel: float
    terminal_step: int | None = None
    terminal_accel: float = 0.0

    def action(self, t: int) -> float:
        if self.terminal_step is not None and t >= self.terminal_step:
            return self.terminal_accel
        return self.decel if t >= self.onset_step else 0.0


@dataclass
class FeasibilityResult:
    feasible: bool
    witness: OpenLoopPlan | None
    min_gaps: list | None
    verified: bool | None
    plans_checked: int


def _plan_grid(onsets, decels, terminals):
    for term in terminals:
        for decel in decels:
            for onset in onsets:
                if term is None:
                    yield OpenLoopPlan(onset, decel)
                else:
                    yield OpenLoopPlan(onset, decel, term[0], term[1])


def _batch_rollout(config: ScenarioConfig, plans: list[OpenLoopPlan]) -> np.ndarray:
    """Min gap per pair for every plan, simulating all plans at once.

    Mirrors :class:`PlatoonSim` for a deterministic config with all middle
    vehicles following the same open-loop plan. The Kalman gain sequence does
    not depend on the measurements, so one gain schedule serves every plan.
    """
    cfg = config.deterministic()
    if cfg.follower_policy != "baseline":
        raise ValueError("feasibility search assumes a baseline follower")
    ref = PlatoonSim(cfg, np.random.default_rng(0))
    specs = ref.specs
    n = len(specs)
    P = len(plans)
    dt = cfg.dt
    x = np.tile([s.x for s in ref.chain.states], (P, 1))
    v = np.tile([s.v for s in ref.chain.states], (P, 1))
    lengths = np.array([s.length for s in specs])
    max_dec = np.array([s.max_decel for s in specs])
    max_acc = np.array([s.max_accel for s in specs])

    onset = np.array([p.onset_step for p in plans])
    decel = np.array([p.decel for p in plans])
    term_step = np.array([p.terminal_step if p.terminal_step is not None else np.iinfo(np.int64).max
                          for p in plans])
    term_acc = np.array([p.terminal_accel for p in plans])

    # follower's track of its leader
    track0 = ref.front_tracks[n - 1]
    est = np.tile(track0.state_est, (P, 1))
    F = transition_matrix(dt)
    track = track0
    latched = np.zeros(P, dtype=bool)
    thr = ref.ctrl[n - 1].ttc_threshold
    min_gaps = x[:, :-1] - lengths[:-1] - x[:, 1:]

    for t in range(cfg.horizon_steps):
        cmd = np.zeros((P, n))
        cmd[:, 0] = ref.brake_decel if t >= ref.brake_step else 0.0
        mid = np.where(t >= term_step, term_acc, np.where(t >= onset, decel, 0.0))
        cmd[:, 1:n - 1] = mid[:, None]
        # follower baseline
        g = np.maximum(0.0, x[:, n - 2] - lengths[n - 2] - x[:, n - 1])
        v_front = v[:, n - 2] if cfg.oracle_sensing else est[:, 1]
        closing = v[:, n - 1] - v_front
        with np.errstate(divide="ignore", invalid="ignore"):
            ttc = np.where(closing > 0, g / np.where(closing > 0, closing, 1.0), np.inf)
        latched |= ttc < thr
        cmd[:, n - 1] = np.where(latched, -max_dec[n - 1], 0.0)
        # kinematics, exact with in-step stopping
        acc = np.clip(cmd, -max_dec, max_acc)
        v_new = v + acc * dt
        stop = v_new < 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            stop_dx = np.where(stop & (v > 0), v * v / np.where(acc < 0, -2.0 * acc, 1.0), 0.0)
        x = np.where(stop, x + stop_dx, x + v * dt + 0.5 * acc * dt * dt)
        v = np.where(stop, 0.0, v_new)
        gaps = x[:, :-1] - lengths[:-1] - x[:, 1:]
        np.minimum(min_gaps, gaps, out=min_gaps)
        # follower tracker update
        track = kf_predict(track, dt)
        Pm = track.covariance
        k = Pm[:, 0] / (Pm[0, 0] + track.meas_std ** 2)
        I_KH = np.eye(3)
        I_KH[:, 0] -= k
        Pn = I_KH @ Pm @ I_KH.T + track.meas_std ** 2 * np.outer(k, k)
        track = KalmanTrack(track.state_est, 0.5 * (Pn + Pn.T), track.process_jerk_std, track.meas_std)
        pred = est @ F.T
        z = x[:, n - 1] + gaps[:, n - 2]
        est = pred + (z - pred[:, 0])[:, None] * k[None, :]
    return min_gaps


def replay_plan(config: ScenarioConfig, plan: OpenLoopPlan) -> list[float]:
    """Min gap per pair when all middle vehicles follow ``plan`` in the scalar simulator."""
    sim = PlatoonSim(config.deterministic(), np.random.default_rng(0))
    mins = np.array(sim.chain.gaps())
    for t in range(sim.config.horizon_steps):
        sim.step([plan.action(t)] * (sim.n_vehicles - 2))
        mins = np.minimum(mins, sim.chain.gaps())
    return mins.tolist()


def feasibility_oracle(scenario, onsets=range(0, 301), decel_step=0.5,
                       terminals=(None, (800, 0.5), (800, 1.0), (1000, 1.0)),
                       chunk=2048) -> FeasibilityResult:
    """Grid search for an open-loop plan that keeps every gap positive.

    All middle vehicles share the plan; the follower reacts with the TTC
    baseline. Plans are tried in order of braking strength, then onset, and
    the first witness is replayed through the scalar simulator.
    """
    config = make_scenario(scenario) if isinstance(scenario, str) else scenario
    spec = config.spec_for(config.vehicle_classes[1])
    decels = [-decel_step * k for k in range(int(round(spec.max_decel / decel_step)) + 1)]
    checked = 0
    grid = _plan_grid(list(onsets), decels, list(terminals))
    while True:
        batch = list(itertools.islice(grid, chunk))
        if not batch:
            return FeasibilityResult(False, None, None, None, checked)
        mins = _batch_rollout(config, batch)
        checked += len(batch)
        ok = np.flatnonzero(np.all(mins > 0.0, axis=1))
        if ok.size:
            plan = batch[int(ok[0])]
            replayed = replay_plan(config, plan)
            return FeasibilityResult(True, plan, replayed, bool(min(replayed) > 0.0), checked)


# -- multi-seed training -----------------------------------------------------

def parse_seeds(text) -> list[int]:
    """Parse ``"1..5"``, ``"1,3,7"`` or a mix such as ``"1..3,9"``."""
    if isinstance(text, (list, tuple)):
        return [int(s) for s in text]
    seeds = []
    for part in str(text).split(","):
        part = part.strip()
        if not part:
            continue
        if ".." in part:
            lo, hi = part.split("..")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(part))
    return seeds


def aggregate_returns(curves) -> tuple[np.ndarray, np.ndarray]:
    """Per-episode mean and std over seeds; shorter curves are NaN-padded."""
    if not curves:
        raise ValueError("no curves to aggregate")
    width = max(len(c) for c in curves)
    mat = np.full((len(curves), width), np.nan)
    for k, c in enumerate(curves):
        mat[k, :len(c)] = c
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        return np.nanmean(mat, axis=0), np.nanstd(mat, axis=0)


def _train_one(agent_params, scenario, episodes, seed, stop_at, window, out_dir):
    from .agent import DDPGAgent

    agent = DDPGAgent(**{**agent_params, "random_state": seed})
    agent.fit(scenario, episodes=episodes, stop_at=stop_at, window=window)
    if out_dir is not None:
        seed_dir = os.path.join(out_dir, f"seed_{seed}")
        os.makedirs(seed_dir, exist_ok=True)
        agent.save(os.path.join(seed_dir, "checkpoint.json"))
        agent.training_log_.to_json(os.path.join(seed_dir, "training_log.json"))
    return agent


def run_training_suite(seeds, episodes, scenario=None, agent_params=None, stop_at=None,
                       window=30, out_dir=None, n_jobs=1) -> dict:
    """Train one agent per seed and aggregate the return curves."""
    seeds = parse_seeds(seeds)
    if not seeds:
        raise ValueError("at least one seed is required")
    scenario = scenario if scenario is not None else make_scenario("train_random")
    agent_params = dict(agent_params or {})
    if n_jobs == 1:
        agents = [_train_one(agent_params, scenario, episodes, s, stop_at, window, out_dir)
                  for s in seeds]
    else:
        from joblib import Parallel, delayed

        agents = Parallel(n_jobs=n_jobs)(
            delayed(_train_one)(agent_params, scenario, episodes, s, stop_at, window, out_dir)
            for s in seeds)
    logs = [a.training_log_ for a in agents]
    mean, std = aggregate_returns([lg.returns for lg in logs])
    result = {
        "seeds": seeds,
        "logs": logs,
        "agents": agents,
        "mean": mean,
        "std": std,
        "reached": [lg.first_episode_reaching(stop_at if stop_at is not None else 22000.0, window)
                    for lg in logs],
    }
    if out_dir is not None:
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "aggregate.json"), "w") as fh:
            json.dump({"seeds": seeds, "mean": _nan_to_none(mean), "std": _nan_to_none(std),
                       "reached": result["reached"]}, fh)
    return result


def _nan_to_none(arr):
    return [None if not np.isfinite(v) else float(v) for v in arr]
