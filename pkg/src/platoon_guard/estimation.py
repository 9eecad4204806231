"""Constant-acceleration Kalman tracking of neighbouring vehicles.

The ego only senses its own position and the bumper gaps to its neighbours,
so each neighbour's speed and acceleration are estimated from a position-only
measurement stream.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from functools import lru_cache

import numpy as np

from .sim import VehicleSpec, VehicleState


class Side(str, Enum):
    FRONT = "front"
    REAR = "rear"


def transition_matrix(dt: float) -> np.ndarray:
    return np.array([[1.0, dt, 0.5 * dt * dt],
                     [0.0, 1.0, dt],
                     [0.0, 0.0, 1.0]])


def white_jerk_noise(dt: float, jerk_std: float) -> np.ndarray:
    """Discrete white-jerk process noise: jerk held constant over each step."""
    g = np.array([dt ** 3 / 6.0, dt * dt / 2.0, dt])
    return np.outer(g, g) * jerk_std ** 2


@lru_cache(maxsize=64)
def _predict_mats(dt: float, jerk_std: float):
    F = transition_matrix(dt)
    Q = white_jerk_noise(dt, jerk_std)
    F.flags.writeable = False
    Q.flags.writeable = False
    return F, Q


@dataclass(frozen=True)
class KalmanTrack:
    """Estimate of one neighbour's (position, velocity, acceleration)."""

    state_est: np.ndarray
    covariance: np.ndarray
    process_jerk_std: float = 2.0
    meas_std: float = 0.05

    @classmethod
    def initial(cls, position: float, velocity: float = 25.0, acceleration: float = 0.0,
                cov_diag=(1.0, 4.0, 4.0), process_jerk_std: float = 2.0,
                meas_std: float = 0.05) -> "KalmanTrack":
        return cls(np.array([position, velocity, acceleration], dtype=float),
                   np.diag(np.asarray(cov_diag, dtype=float)),
                   process_jerk_std, meas_std)

    @property
    def position(self) -> float:
        return float(self.state_est[0])

    @property
    def velocity(self) -> float:
        return float(self.state_est[1])

    @property
    def acceleration(self) -> float:
        return float(self.state_est[2])


def kf_predict(track: KalmanTrack, dt: float) -> KalmanTrack:
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    F, Q = _predict_mats(float(dt), float(track.process_jerk_std))
    P = F @ track.covariance @ F.T + Q
    return KalmanTrack(F @ track.state_est, 0.5 * (P + P.T), track.process_jerk_std, track.meas_std)


def kf_update(track: KalmanTrack, measured_position: float) -> KalmanTrack:
    """Correct the track with a position measurement (Joseph-form covariance)."""
    if not np.isfinite(measured_position):
        raise ValueError("measurement must be finite")
    P = track.covariance
    r = track.meas_std ** 2
    s = P[0, 0] + r
    if not np.isfinite(s) or s <= 0.0:
        return track
    k = P[:, 0] / s
    innovation = measured_position - track.state_est[0]
    x = track.state_est + k * innovation
    # Joseph form (I - kH) P (I - kH)^T + r k k^T with H = [1, 0, 0]
    A = P - np.outer(k, P[0])
    P_new = A - np.outer(A[:, 0], k) + r * np.outer(k, k)
    return KalmanTrack(x, 0.5 * (P_new + P_new.T), track.process_jerk_std, track.meas_std)


def neighbor_position(ego: VehicleState, ego_spec: VehicleSpec, gap_meas: float,
                      side: Side) -> float:
    """Reference point of a neighbour implied by a gap reading.

    Front: the leader's rear bumper. Rear: the follower's front bumper.
    """
    if gap_meas < 0:
        raise ValueError(f"gap measurement must be non-negative, got {gap_meas}")
    if Side(side) is Side.FRONT:
        return ego.x + gap_meas
    return ego.x - ego_spec.length - gap_meas


def track_neighbor(ego: VehicleState, gap_meas: float, side: Side, track: KalmanTrack,
                   dt: float, ego_spec: VehicleSpec | None = None) -> KalmanTrack:
    z = neighbor_position(ego, ego_spec or VehicleSpec.light(), gap_meas, side)
    return kf_update(kf_predict(track, dt), z)
