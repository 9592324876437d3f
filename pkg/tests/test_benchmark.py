import pytest

from grid_agent.harness.benchmark import aggregate, run_benchmark
from grid_agent.harness.scenarios import preset
from grid_agent.planner import HeuristicPlanner
from grid_agent.workflow import WorkflowOptions

from helpers import FailingPlanner

RESOLVABLE = ("tie_feeder", "ieee69_disconnected")


def suite():
    return [preset(n) for n in RESOLVABLE]


def test_two_resolvable_scenarios_all_succeed():
    report = run_benchmark(suite(), HeuristicPlanner)
    assert report.aggregate["success_rate"] == 1.0
    assert report.aggregate["failures"] == []
    assert [r["scenario"] for r in report.rows] == list(RESOLVABLE)
    assert report.planner == "heuristic"
    assert "success rate 100.0%" in report.table()


def test_erroring_planner_scores_zero_and_itemizes():
    report = run_benchmark(suite(), FailingPlanner, opts=WorkflowOptions(t_max=2))
    assert report.aggregate["success_rate"] == 0.0
    fails = report.aggregate["failures"]
    assert [f["scenario"] for f in fails] == list(RESOLVABLE)
    assert all(f["status"] == "failed" and "planner crashed" in f["error"] for f in fails)


def test_repetitions_give_identical_rows():
    report = run_benchmark([preset("tie_feeder")], HeuristicPlanner, repetitions=3)
    rows = [{k: v for k, v in r.items() if k != "repetition"} for r in report.rows]
    assert [r["repetition"] for r in report.rows] == [0, 1, 2]
    assert rows[0] == rows[1] == rows[2]


def test_parallel_and_serial_reports_are_byte_identical():
    a = run_benchmark(suite(), HeuristicPlanner, repetitions=2, jobs=1).to_json()
    b = run_benchmark(suite(), HeuristicPlanner, repetitions=2, jobs=3).to_json()
    assert a == b
    assert "runtime" not in a


def test_aggregate_matches_hand_computation():
    rows = [
        {"scenario": "a", "repetition": 0, "status": "resolved", "error": None, "success": True,
         "iterations": 1, "total_actions": 1, "action_efficiency": 2.0, "runtime_seconds": 0.5},
        {"scenario": "b", "repetition": 0, "status": "resolved", "error": None, "success": True,
         "iterations": 3, "total_actions": 5, "action_efficiency": 2.8, "runtime_seconds": 1.5},
        {"scenario": "c", "repetition": 0, "status": "failed", "error": "boom", "success": False,
         "iterations": 2, "total_actions": 0, "action_efficiency": None, "runtime_seconds": 1.0},
    ]
    agg = aggregate(rows, include_timing=True)
    assert agg["runs"] == 3 and agg["successes"] == 2
    assert agg["success_rate"] == pytest.approx(2 / 3)
    assert agg["mean_iterations"] == pytest.approx(2.0)
    assert agg["mean_actions"] == pytest.approx(2.0)
    assert agg["mean_efficiency"] == pytest.approx(2.4)  # the undefined efficiency is left out
    assert agg["mean_runtime_s"] == pytest.approx(1.0)
    assert agg["failures"] == [{"scenario": "c", "repetition": 0, "status": "failed", "error": "boom"}]
    assert "mean_runtime_s" not in aggregate(rows)


def test_table_columns_align():
    report = run_benchmark([preset("tie_feeder")], HeuristicPlanner, include_timing=True)
    lines = report.table().splitlines()
    assert lines[0].split() == ["scenario", "rep", "status", "viol", "left", "iter", "acts", "eff",
                                "coord", "time_s"]
    assert len(lines[1].split()) == 10 and "mean runtime" in lines[-1]
