import random

import pytest
from hypothesis import given, settings, strategies as st

from grid_agent.actions import AddBattery, CurtailLoad, DispatchBattery, SetSwitch, apply_plan
from grid_agent.caseio import builtin_network
from grid_agent.harness.scenarios import preset, tie_feeder
from grid_agent.planner import HeuristicPlanner, Plan
from grid_agent.powerflow import solve
from grid_agent.violations import Violation, ViolationReport, analyze, compare
from grid_agent.workflow import (
    ABORTED, ACCEPTED, EXHAUSTED, FAILED, PLANNER_ERROR, RESOLVED, ROLLED_BACK, ResolutionResult,
    WorkflowOptions, evaluate_effectiveness, restore, run, snapshot,
)

from helpers import FailingPlanner, ScriptedPlanner, WorseningPlanner, make_request, random_plan


def replay_fingerprint(result):
    net = result.initial_network()
    apply_plan(net, [a for _, a in result.accepted_actions])
    return analyze(net, solve(net)).fingerprint


def test_violation_free_input_needs_no_iterations():
    result = run(builtin_network("ieee30"), FailingPlanner())
    assert result.status == RESOLVED and result.iterations == 0
    assert result.accepted_actions == [] and result.attempts == []
    assert "No action required" in result.explanation


def test_worsening_planner_is_always_rolled_back():
    net = tie_feeder()
    before = snapshot(net)
    result = run(net, WorseningPlanner(), WorkflowOptions(t_max=4))
    assert result.status == EXHAUSTED and result.iterations == 4
    assert [a.outcome for a in result.attempts] == [ROLLED_BACK] * 4
    assert snapshot(result.network) == before
    assert result.final_report == result.initial_report


def test_tie_feeder_resolved_in_one_step():
    result = run(tie_feeder(), HeuristicPlanner())
    assert result.status == RESOLVED and result.iterations == 1
    assert [a for _, a in result.accepted_actions] == [SetSwitch("T1", True)]
    assert result.final_report.empty


def test_rollback_history_reaches_next_request():
    planner = ScriptedPlanner([[SetSwitch("S1", False)], [SetSwitch("T1", True)]])
    result = run(tie_feeder(), planner)
    assert [a.outcome for a in result.attempts] == [ROLLED_BACK, ACCEPTED]
    assert planner.requests[0].history == ()
    assert "open switch S1 rolled back" in planner.requests[1].history[0]
    assert planner.requests[1].t_max_remaining == 9
    # the narrative keeps both the failed attempt and the accepted plan
    assert "rolled back" in result.explanation and "accepted" in result.explanation


def test_divergent_plan_is_aborted_as_a_whole():
    net = tie_feeder()
    net.battery_budget = 1
    planner = ScriptedPlanner([
        [AddBattery("4", 1000.0, 1000.0, 1000.0), DispatchBattery("BAT1", -900.0, 0.0)],
        [SetSwitch("T1", True)],
    ])
    result = run(net, planner)
    first = result.attempts[0]
    assert first.outcome == ABORTED and "power flow failed after action 1" in first.note
    assert result.status == RESOLVED
    assert "BAT1" not in result.network.batteries


def test_invalid_action_aborts_plan():
    planner = ScriptedPlanner([[SetSwitch("T1", True), CurtailLoad("L3", 0.5)]])
    net = tie_feeder()
    result = run(net, planner, WorkflowOptions(t_max=1))
    # the plan clears everything after its first action, so the rest is skipped
    assert result.status == RESOLVED and result.attempts[0].applied == 1

    planner = ScriptedPlanner([[CurtailLoad("L3", 0.5), SetSwitch("T1", True)]])
    result = run(tie_feeder(), planner, WorkflowOptions(t_max=1))
    assert result.attempts[0].outcome == ABORTED and "NotCurtailable" in result.attempts[0].note
    assert result.status == EXHAUSTED


def test_planner_error_without_progress_fails():
    result = run(tie_feeder(), FailingPlanner())
    assert result.status == FAILED and result.attempts[0].outcome == PLANNER_ERROR
    assert result.error.startswith("RuntimeError")


def test_planner_error_after_progress_is_exhausted():
    net = preset("cigre_mv_severe").build()
    first = HeuristicPlanner().propose(make_request(net))
    result = run(net, ScriptedPlanner([first]))  # script runs dry on iteration 2
    if result.status == RESOLVED:
        pytest.skip("first plan already resolves everything")
    assert result.status == EXHAUSTED and result.attempts[-1].outcome == PLANNER_ERROR


def test_empty_plan_is_not_progress():
    result = run(tie_feeder(), ScriptedPlanner([[]]), WorkflowOptions(t_max=1))
    assert result.attempts[0].outcome == ROLLED_BACK
    assert result.attempts[0].effectiveness.actions_used == 0


def test_effectiveness_records():
    keys = [("undervoltage", str(i)) for i in range(14)]
    before = ViolationReport([Violation(k, e, 0.9, 0.95, 0.05) for k, e in keys])
    plan = Plan(tuple(CurtailLoad(f"L{i}", 0.1) for i in range(4)) + (SetSwitch("S1", True),))
    eff = evaluate_effectiveness(before, ViolationReport(), plan)
    assert (eff.resolved_count, eff.introduced_count, eff.actions_used) == (14, 0, 5)
    assert eff.tallies == {"curtail_load": 4, "update_switch_status": 1}
    worse = ViolationReport(before.violations + [Violation("thermal", "1-2", 1.2, 1.0, 0.2)])
    rolled = evaluate_effectiveness(before, worse, plan, accepted=False)
    assert (rolled.resolved_count, rolled.introduced_count) == (0, 1)


def test_explanations_are_deterministic_and_justify_actions():
    a = run(preset("cigre_mv_severe").build(), HeuristicPlanner())
    b = run(preset("cigre_mv_severe").build(), HeuristicPlanner())
    assert a.explanation == b.explanation
    assert "Action justification:" in a.explanation
    assert a.explanation.count("  - iteration ") == len(a.accepted_actions)


def test_result_json_round_trip():
    result = run(tie_feeder(), HeuristicPlanner())
    back = ResolutionResult.from_dict(result.to_dict())
    assert back.to_dict() == result.to_dict()
    assert "wall_time_s" not in result.to_dict(include_timing=False)


def check_invariants(net, result, t_max):
    assert result.iterations <= t_max
    accepted = [a for a in result.attempts if a.outcome == ACCEPTED]
    ranks = [(len(a.before), a.before.total_severity) for a in accepted]
    ranks.append((len(result.final_report), result.final_report.total_severity))
    for (n0, s0), (n1, s1) in zip(ranks, ranks[1:]):
        assert n1 < n0 or (n1 == n0 and s1 < s0)
    assert replay_fingerprint(result) == result.final_report.fingerprint
    assert snapshot(restore(snapshot(result.network))) == snapshot(result.network)


@given(st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_random_planners_keep_loop_invariants(seed):
    rng = random.Random(seed)
    net = rng.choice([tie_feeder, lambda: preset("cigre_mv_severe").build()])()
    original = snapshot(net)
    plans = [random_plan(rng, net, max_len=4) for _ in range(6)]
    t_max = rng.randint(1, 6)
    result = run(net, ScriptedPlanner(plans), WorkflowOptions(t_max=t_max))
    assert snapshot(net) == original  # caller's network untouched
    check_invariants(net, result, t_max)
    # rolled-back and aborted iterations leave the sandbox at the last accepted state
    replayed = result.initial_network()
    apply_plan(replayed, [a for _, a in result.accepted_actions])
    assert snapshot(replayed) == snapshot(result.network)


def test_heuristic_run_keeps_invariants_on_presets():
    for name in ("cigre_mv_severe", "ieee69_disconnected"):
        net = preset(name).build()
        result = run(net, HeuristicPlanner())
        check_invariants(net, result, 10)
        assert compare(result.initial_report, result.final_report).resolved
