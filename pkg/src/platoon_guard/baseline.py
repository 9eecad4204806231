"""TTC-triggered emergency braking used as the reference ADAS, plus the
scripted lead-vehicle manoeuvre."""
from __future__ import annotations

from dataclasses import dataclass

from .sim import VehicleSpec, ttc

TTC_THRESHOLD = 1.4


@dataclass(frozen=True)
class BaselineControllerState:
    aeb_latched: bool = False
    ttc_threshold: float = TTC_THRESHOLD


def baseline_action(ctrl: BaselineControllerState, front_gap: float, v_self: float,
                    v_front_est: float, spec: VehicleSpec
                    ) -> tuple[float, BaselineControllerState]:
    """Cruise at constant speed until the front TTC drops below threshold, then
    brake at the vehicle's limit for the rest of the episode.

    The brake stays latched once triggered; a stopped vehicle stays stopped.
    """
    if front_gap < 0:
        raise ValueError(f"front_gap must be non-negative, got {front_gap}")
    if ctrl.aeb_latched or ttc(front_gap, v_self, v_front_est) < ctrl.ttc_threshold:
        if not ctrl.aeb_latched:
            ctrl = BaselineControllerState(True, ctrl.ttc_threshold)
        return -spec.max_decel, ctrl
    return 0.0, ctrl


def scripted_leader_action(t_step: int, brake_step: int, brake_decel: float) -> float:
    if brake_step < 0:
        raise ValueError(f"brake_step must be non-negative, got {brake_step}")
    return brake_decel if t_step >= brake_step else 0.0
