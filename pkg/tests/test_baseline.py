import pytest

from platoon_guard.baseline import TTC_THRESHOLD, BaselineControllerState, baseline_action, scripted_leader_action
from platoon_guard.sim import VehicleSpec


def test_no_closing_speed_means_no_braking():
    a, ctrl = baseline_action(BaselineControllerState(), 16.0, 25.0, 25.0, VehicleSpec.light())
    assert a == 0.0 and not ctrl.aeb_latched


@pytest.mark.parametrize("spec, expected", [(VehicleSpec.light(), -7.5), (VehicleSpec.heavy(), -6.0)])
def test_low_ttc_triggers_full_braking(spec, expected):
    a, ctrl = baseline_action(BaselineControllerState(), 10.0, 25.0, 17.5, spec)
    assert a == expected
    assert ctrl.aeb_latched


def test_threshold_is_strict():
    # ttc exactly 1.4 s does not trigger
    a, _ = baseline_action(BaselineControllerState(), 10.5, 25.0, 17.5, VehicleSpec.light())
    assert TTC_THRESHOLD == 1.4
    assert a == 0.0


def test_latch_holds_after_threat_clears():
    _, ctrl = baseline_action(BaselineControllerState(), 10.0, 25.0, 17.5, VehicleSpec.light())
    a, ctrl = baseline_action(ctrl, 50.0, 10.0, 20.0, VehicleSpec.light())
    assert a == -7.5 and ctrl.aeb_latched


def test_negative_gap_rejected():
    with pytest.raises(ValueError):
        baseline_action(BaselineControllerState(), -1.0, 25.0, 20.0, VehicleSpec.light())


@pytest.mark.parametrize("t, expected", [(99, 0.0), (100, -3.0), (500, -3.0)])
def test_scripted_leader(t, expected):
    assert scripted_leader_action(t, 100, -3.0) == expected
