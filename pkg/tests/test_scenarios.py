import pytest
from hypothesis import given, settings, strategies as st

from grid_agent.caseio import builtin_network
from grid_agent.harness.scenarios import (
    PRESETS, Scenario, ScenarioTarget, SearchSpace, TargetUnreachable, dump_suite,
    generate_scenario, load_suite, preset, tie_feeder,
)
from grid_agent.powerflow import find_islands, solve
from grid_agent.violations import analyze

# concurrent violation counts named for the published scenario families
CIGRE_SEVERE_COUNT = 14
CIGRE_ISOLATED_BUSES = 5


def report_of(scenario):
    net = scenario.build()
    return analyze(net, solve(net))


def test_cigre_fourteen_mixed_violations():
    s = generate_scenario(builtin_network("cigre_mv"), ScenarioTarget.of(CIGRE_SEVERE_COUNT,
                                                                         ["undervoltage", "thermal"]))
    rep = report_of(s)
    assert len(rep) >= CIGRE_SEVERE_COUNT
    assert rep.counts["undervoltage"] >= 1 and rep.counts["thermal"] >= 1
    assert s.expected_violation_profile == {"total": len(rep), "counts": rep.counts}


def test_cigre_fault_isolating_five_buses():
    target = ScenarioTarget(CIGRE_ISOLATED_BUSES, {"disconnected": CIGRE_ISOLATED_BUSES})
    s = generate_scenario(builtin_network("cigre_mv"), target, seed=1)
    net = s.build()
    dark = [b for isl in find_islands(net) if not isl.energized for b in isl.buses]
    assert len(dark) >= CIGRE_ISOLATED_BUSES
    assert all(p["op"] in ("open_branch", "force_switch") for p in s.perturbations)
    assert report_of(s).counts["disconnected"] == len(dark)


def test_unit_scale_only_is_unreachable():
    space = SearchSpace(max_scale=1.0, max_derates=0)
    with pytest.raises(TargetUnreachable):
        generate_scenario(builtin_network("cigre_mv"), ScenarioTarget(1), space=space)


def test_target_validation():
    with pytest.raises(ValueError):
        ScenarioTarget(0)
    with pytest.raises(ValueError):
        ScenarioTarget(1, {"brownout": 1})


@given(st.integers(0, 50))
@settings(max_examples=8, deadline=None)
def test_generation_is_reproducible(seed):
    base = builtin_network("cigre_mv")
    target = ScenarioTarget(5, {"disconnected": 5})
    assert generate_scenario(base, target, seed) == generate_scenario(base, target, seed)


@pytest.mark.parametrize("name", PRESETS)
def test_presets_meet_their_targets(name):
    s = preset(name)
    rep = report_of(s)
    assert not rep.empty
    assert s.expected_violation_profile["total"] == len(rep)


def test_tie_feeder_has_two_undervoltages():
    rep = analyze(tie_feeder(), solve(tie_feeder()))
    assert sorted(rep.keys) == [("undervoltage", "3"), ("undervoltage", "4")]


def test_suite_round_trip_and_preset_names():
    suite = [preset("tie_feeder"), preset("cigre_mv_disconnected")]
    assert load_suite(dump_suite(suite)) == suite
    assert load_suite('["tie_feeder"]') == [preset("tie_feeder")]
    assert Scenario.from_dict(suite[1].to_dict()) == suite[1]
