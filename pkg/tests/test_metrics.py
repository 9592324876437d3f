import pytest

from grid_agent.actions import CurtailLoad
from grid_agent.caseio import builtin_network
from grid_agent.harness.metrics import compute_metrics
from grid_agent.harness.scenarios import tie_feeder
from grid_agent.planner import HeuristicPlanner
from grid_agent.violations import Violation, ViolationReport
from grid_agent.workflow import run


def test_efficiency_fourteen_over_five():
    result = run(builtin_network("ieee69"), HeuristicPlanner())  # healthy: any result object works
    result.initial_report = ViolationReport(
        [Violation("undervoltage", str(i), 0.9, 0.95, 0.05) for i in range(2, 16)])
    loads = list(result.network.loads)[:5]
    result.accepted_actions = [(1, CurtailLoad(l, 0.1)) for l in loads]
    m = compute_metrics(result)
    assert m.total_actions == 5
    assert m.action_efficiency == pytest.approx(2.8)


def test_healthy_run_has_undefined_efficiency():
    m = compute_metrics(run(builtin_network("ieee30"), HeuristicPlanner()))
    assert m.success and m.total_actions == 0
    assert m.action_efficiency is None and m.coordination_score is None
    assert m.to_dict()["action_efficiency"] is None


def test_adjacent_actions_score_full_coordination():
    result = run(tie_feeder(), HeuristicPlanner())
    m = compute_metrics(result)
    assert m.coordination_score == 1.0 and m.action_efficiency == 2.0
    assert m.usage["update_switch_status"] == 1.0 and m.usage["curtail_load"] == 0.0


def test_distant_action_lowers_coordination():
    result = run(builtin_network("ieee69"), HeuristicPlanner())
    net = result.network
    result.initial_report = ViolationReport([Violation("undervoltage", "65", 0.9, 0.95, 0.05)])
    near = next(l.id for l in net.loads.values() if l.bus_id == "64")
    far = next(l.id for l in net.loads.values() if l.bus_id == "6")
    result.accepted_actions = [(1, CurtailLoad(near, 0.1)), (1, CurtailLoad(far, 0.1))]
    m = compute_metrics(result)
    assert m.coordination_score == 0.5
    assert m.usage["curtail_load"] == 1.0
    assert "runtime_seconds" not in m.to_dict(include_timing=False)
