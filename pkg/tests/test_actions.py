import random

import pytest
from hypothesis import given, settings, strategies as st

from grid_agent.actions import (
    AddBattery, CurtailLoad, DispatchBattery, InvalidAction, PlanAborted, SetSwitch, action_buses,
    action_from_dict, action_to_dict, apply_action, apply_plan, undo_action, undo_all,
    validate_action,
)
from grid_agent.caseio import BUILTIN_CASES, builtin_network
from grid_agent.model import Battery, Load
from grid_agent.powerflow import solve
from grid_agent.workflow import snapshot

from helpers import random_plan
from oracles import two_bus


def loaded_pair(p_mw=10.0, gamma_max=0.5, budget=1):
    net = two_bus(x_pu=0.05)
    net.loads["L2"] = Load("L2", "2", p_mw, 1.0, curtailable=True, gamma_max=gamma_max)
    net.battery_budget = budget
    return net


def test_curtail_within_gamma_max_ok():
    assert validate_action(loaded_pair(), CurtailLoad("L2", 0.2)) is None


def test_curtail_limits():
    net = loaded_pair()
    assert validate_action(net, CurtailLoad("L2", 0.6)).code == "CurtailmentExceeded"
    assert validate_action(net, CurtailLoad("L2", -0.1)).code == "InvalidValue"
    assert validate_action(net, CurtailLoad("L9", 0.1)).code == "UnknownElement"
    net.loads["L2"].curtailable = False
    assert validate_action(net, CurtailLoad("L2", 0.1)).code == "NotCurtailable"


def test_battery_budget_exceeded():
    net = loaded_pair(budget=1)
    apply_action(net, AddBattery("2"))
    assert validate_action(net, AddBattery("1")).code == "BudgetExceeded"


def test_dispatch_outside_capability_circle():
    net = loaded_pair()
    net.batteries["B"] = Battery("B", "2", s_max_mva=5.0, p_max_mw=5.0, q_max_mvar=5.0)
    diag = validate_action(net, DispatchBattery("B", 4.0, 4.0))
    assert diag.code == "ApparentPowerExceeded" and "32" in diag.message and "25" in diag.message
    assert validate_action(net, DispatchBattery("B", 3.0, 4.0)) is None


def test_dispatch_requires_placement_and_box_limits():
    net = loaded_pair()
    net.batteries["B"] = Battery("B", "2", 5.0, 2.0, 1.0, placed=False)
    assert validate_action(net, DispatchBattery("B", 0.0, 0.0)).code == "NotPlaced"
    net.batteries["B"].placed = True
    assert validate_action(net, DispatchBattery("B", 3.0, 0.0)).code == "ActivePowerExceeded"
    assert validate_action(net, DispatchBattery("B", 0.0, 1.5)).code == "ReactivePowerExceeded"


def test_curtailment_reduces_effective_demand():
    net = loaded_pair(p_mw=10.0)
    apply_action(net, CurtailLoad("L2", 0.2))
    assert net.loads["L2"].effective_p_mw == pytest.approx(8.0)
    # curtailment is absolute, not incremental
    apply_action(net, CurtailLoad("L2", 0.1))
    assert net.loads["L2"].effective_p_mw == pytest.approx(9.0)


def test_switch_apply_undo_bit_identical():
    net = builtin_network("cigre_mv")
    before = snapshot(net)
    rec = apply_action(net, SetSwitch("S1", False))
    assert not net.switches["S1"].closed
    undo_action(net, rec)
    assert snapshot(net) == before


def test_add_battery_then_undo():
    net = loaded_pair()
    before = snapshot(net)
    rec = apply_action(net, AddBattery("2"))
    assert net.batteries["BAT1"].placed and net.placed_batteries() == 1
    assert (net.batteries["BAT1"].p_mw, net.batteries["BAT1"].q_mvar) == (0.0, 0.0)
    assert net.batteries["BAT1"].s_max_mva == 5.0
    undo_action(net, rec)
    assert "BAT1" not in net.batteries and net.placed_batteries() == 0
    assert snapshot(net) == before


def test_invalid_action_raises_on_apply():
    with pytest.raises(InvalidAction):
        apply_action(loaded_pair(), CurtailLoad("L2", 0.9))


def test_empty_plan():
    net = loaded_pair()
    before = snapshot(net)
    assert apply_plan(net, []) == []
    assert snapshot(net) == before


def test_plan_aborts_at_first_invalid_action():
    net = loaded_pair()
    with pytest.raises(PlanAborted) as exc:
        apply_plan(net, [CurtailLoad("L2", 0.3), CurtailLoad("L2", 0.9)])
    assert exc.value.index == 1
    assert net.loads["L2"].gamma == 0.3  # first action stays applied
    undo_all(net, exc.value.undo_stack)
    assert net.loads["L2"].gamma == 0.0


def test_three_action_plan_full_undo():
    net = loaded_pair(budget=2)
    before = snapshot(net)
    stack = apply_plan(net, [CurtailLoad("L2", 0.4), AddBattery("2"), DispatchBattery("BAT1", 1.0, 2.0)])
    assert [r.action.tool for r in stack] == ["dispatch_battery", "add_battery", "curtail_load"]
    undo_all(net, stack)
    assert snapshot(net) == before


def test_action_dict_round_trip_and_buses():
    net = builtin_network("cigre_mv")
    for a in (SetSwitch("S2", True), CurtailLoad("L5", 0.1), AddBattery("4", 2.0, 2.0, 2.0)):
        assert action_from_dict(action_to_dict(a)) == a
    br = net.branches[net.switches["S2"].branch_id]
    assert action_buses(net, SetSwitch("S2", True)) == (br.from_bus, br.to_bus)


@given(st.integers(0, 10**6), st.sampled_from(BUILTIN_CASES))
@settings(max_examples=60, deadline=None)
def test_random_plans_undo_exactly(seed, name):
    rng = random.Random(seed)
    net = builtin_network(name)
    before = snapshot(net)
    plan = random_plan(rng, net)
    try:
        stack = apply_plan(net, plan)
    except PlanAborted as exc:
        stack = exc.undo_stack
    assert net.placed_batteries() <= net.battery_budget
    undo_all(net, stack)
    assert snapshot(net) == before


@given(st.integers(0, 10**6))
@settings(max_examples=30, deadline=None)
def test_validate_is_pure(seed):
    rng = random.Random(seed)
    net = builtin_network("cigre_mv")
    digest = net.digest()
    v_before = solve(net).v_pu
    for a in random_plan(rng, net):
        validate_action(net, a)
    assert net.digest() == digest
    assert solve(net).v_pu == v_before
