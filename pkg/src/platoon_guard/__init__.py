"""Longitudinal platoon simulator with a TTC emergency-braking baseline and a
DDPG agent for the middle vehicle."""
from .agent import DDPGAgent, TrainingLog, explore_action, train
from .baseline import TTC_THRESHOLD, BaselineControllerState, baseline_action
from .env import (REWARD_COLLISION, REWARD_SAFE, Observation, PlatoonEnv, PlatoonSim, ScenarioConfig,
                  make_scenario)
from .estimation import KalmanTrack, Side, kf_predict, kf_update, track_neighbor
from .evaluation import (FeasibilityResult, OpenLoopPlan, RunReport, TrajectoryLog, evaluate,
                         feasibility_oracle, run_training_suite)
from .nets import Adam, DenseNet, soft_update
from .plotting import export_csv, export_svg, read_csv
from .replay import ReplayBuffer
from .sim import Chain, VehicleClass, VehicleSpec, VehicleState, detect_collision, make_chain, step_kinematics, ttc

__all__ = [
    "Adam", "BaselineControllerState", "Chain", "DDPGAgent", "DenseNet", "FeasibilityResult",
    "KalmanTrack", "Observation", "OpenLoopPlan", "PlatoonEnv", "PlatoonSim", "REWARD_COLLISION",
    "REWARD_SAFE", "ReplayBuffer", "RunReport", "ScenarioConfig", "Side", "TTC_THRESHOLD",
    "TrainingLog", "TrajectoryLog", "VehicleClass", "VehicleSpec", "VehicleState",
    "baseline_action", "detect_collision", "evaluate", "explore_action", "export_csv", "export_svg",
    "feasibility_oracle", "kf_predict", "kf_update", "make_chain", "make_scenario", "read_csv",
    "run_training_suite", "soft_update", "step_kinematics", "track_neighbor", "train", "ttc",
]
