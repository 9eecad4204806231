"""Longitudinal kinematics for a single-lane vehicle chain.

Positions refer to the front bumper; a vehicle occupies ``[x - length, x]``.
Vehicles are ordered front to rear, so index 0 is the lead vehicle.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from enum import Enum

import numpy as np


class VehicleClass(str, Enum):
    LIGHT = "light"
    HEAVY = "heavy"


@dataclass(frozen=True)
class VehicleSpec:
    """Physical limits of one vehicle. Accelerations are positive magnitudes."""

    vclass: VehicleClass = VehicleClass.LIGHT
    length: float = 2.0
    max_decel: float = 7.5
    max_accel: float = 3.0

    def __post_init__(self):
        if not self.length > 0:
            raise ValueError(f"length must be positive, got {self.length}")
        if not self.max_decel > 0:
            raise ValueError(f"max_decel must be positive, got {self.max_decel}")
        if not self.max_accel >= 0:
            raise ValueError(f"max_accel must be non-negative, got {self.max_accel}")

    @classmethod
    def light(cls, **overrides) -> "VehicleSpec":
        return cls(**{"vclass": VehicleClass.LIGHT, "length": 2.0, "max_decel": 7.5,
                      "max_accel": 3.0, **overrides})

    @classmethod
    def heavy(cls, **overrides) -> "VehicleSpec":
        return cls(**{"vclass": VehicleClass.HEAVY, "length": 15.0, "max_decel": 6.0,
                      "max_accel": 1.5, **overrides})

    @classmethod
    def of(cls, vclass, **overrides) -> "VehicleSpec":
        vclass = VehicleClass(vclass)
        if vclass is VehicleClass.HEAVY:
            return cls.heavy(**overrides)
        return cls.light(**overrides)

    def clip(self, a: float) -> float:
        return min(max(a, -self.max_decel), self.max_accel)


@dataclass(frozen=True)
class VehicleState:
    x: float
    v: float
    a: float = 0.0


def step_kinematics(state: VehicleState, spec: VehicleSpec, a_cmd: float,
                    dt: float) -> VehicleState:
    """Advance one vehicle by ``dt`` under a constant (clipped) acceleration.

    Integration is exact for constant acceleration. When braking would drive
    the speed negative inside the step, the vehicle stops at the analytic
    stopping point ``v**2 / (2|a|)`` and stays there.
    """
    if not (math.isfinite(state.x) and math.isfinite(state.v)
            and math.isfinite(a_cmd) and math.isfinite(dt)):
        raise ValueError("non-finite kinematic input")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    a = spec.clip(a_cmd)
    v_new = state.v + a * dt
    if v_new < 0.0:
        if state.v <= 0.0:
            return VehicleState(state.x, 0.0, 0.0)
        return VehicleState(state.x + state.v * state.v / (2.0 * -a), 0.0, a)
    return VehicleState(state.x + state.v * dt + 0.5 * a * dt * dt, v_new, a)


@dataclass
class Chain:
    """Vehicles ordered front to rear plus the integration step."""

    specs: list[VehicleSpec]
    states: list[VehicleState]
    dt: float = 0.01

    def __post_init__(self):
        if len(self.specs) != len(self.states):
            raise ValueError("specs and states must have equal length")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")

    def __len__(self):
        return len(self.specs)

    def gap(self, i: int) -> float:
        return gap(self, i)

    def gaps(self) -> list[float]:
        return [gap(self, i) for i in range(len(self) - 1)]

    def step(self, commands) -> "Chain":
        """Return the chain advanced by one step under per-vehicle commands."""
        if len(commands) != len(self):
            raise ValueError(f"expected {len(self)} commands, got {len(commands)}")
        states = [step_kinematics(s, spec, a, self.dt)
                  for s, spec, a in zip(self.states, self.specs, commands)]
        return replace(self, states=states)


def gap(chain: Chain, i: int) -> float:
    """Bumper-to-bumper distance between vehicle ``i`` and the one behind it."""
    if not 0 <= i < len(chain) - 1:
        raise IndexError(f"gap index {i} out of range for chain of {len(chain)}")
    return chain.states[i].x - chain.specs[i].length - chain.states[i + 1].x


def detect_collision(chain: Chain) -> list[tuple[int, int]]:
    """Pairs ``(i, i+1)`` whose gap is zero or negative."""
    return [(i, i + 1) for i, g in enumerate(chain.gaps()) if g <= 0.0]


def ttc(gap: float, v_rear: float, v_front: float) -> float:
    """Time-to-collision; ``inf`` when the rear vehicle is not closing in."""
    if gap < 0:
        raise ValueError(f"ttc undefined for negative gap {gap}")
    closing = v_rear - v_front
    if closing <= 0:
        return math.inf
    return gap / closing


def make_chain(specs, positions, speeds, dt: float = 0.01) -> Chain:
    states = [VehicleState(float(x), float(v), 0.0) for x, v in zip(positions, speeds)]
    xs = np.array([s.x for s in states])
    if len(xs) > 1 and not np.all(np.diff(xs) < 0):
        raise ValueError("positions must be strictly decreasing front to rear")
    return Chain(list(specs), states, dt)
