"""Power-grid violation detection and sandboxed, rollback-protected remediation."""

from .model import Network, build_network, build_admittance, effective_branch_state
from .caseio import builtin_network, load_case, parse_case_json, parse_matpower_subset, serialize_case
from .powerflow import SolverOptions, find_islands, solve
from .violations import ViolationReport, analyze, compare
from .actions import AddBattery, CurtailLoad, DispatchBattery, SetSwitch, apply_plan, validate_action
from .representation import render
from .planner import HeuristicPlanner, LlmClientConfig, LlmPlanner, Plan, PlanRequest
from .workflow import ResolutionResult, WorkflowOptions, run

__all__ = [
    "Network", "build_network", "build_admittance", "effective_branch_state",
    "builtin_network", "load_case", "parse_case_json", "parse_matpower_subset", "serialize_case",
    "SolverOptions", "find_islands", "solve", "ViolationReport", "analyze", "compare",
    "AddBattery", "CurtailLoad", "DispatchBattery", "SetSwitch", "apply_plan", "validate_action",
    "render", "HeuristicPlanner", "LlmClientConfig", "LlmPlanner", "Plan", "PlanRequest",
    "ResolutionResult", "WorkflowOptions", "run",
]
__version__ = "0.1.0"
