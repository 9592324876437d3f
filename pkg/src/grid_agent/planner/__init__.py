"""Plan generation: a deterministic search planner and a chat-model planner."""

from .base import (
    PRIORITY_POLICY, Capabilities, NoImprovingPlan, Plan, Planner, PlannerError, PlanRequest,
    make_sandbox_eval,
)
from .heuristic import HeuristicPlanner, plan_heuristic
from .llm import (
    InvalidArguments, LlmClientConfig, LlmPlanner, NoJsonFound, ParseError, SchemaMismatch,
    TransportError, UnknownTool, UnparseableAfterRepair, build_prompt, http_transport,
    parse_tool_calls, plan_llm, plan_to_wire,
)

__all__ = [
    "PRIORITY_POLICY", "Capabilities", "NoImprovingPlan", "Plan", "Planner", "PlannerError",
    "PlanRequest", "make_sandbox_eval", "HeuristicPlanner", "plan_heuristic",
    "InvalidArguments", "LlmClientConfig", "LlmPlanner", "NoJsonFound", "ParseError",
    "SchemaMismatch", "TransportError", "UnknownTool", "UnparseableAfterRepair", "build_prompt",
    "http_transport", "parse_tool_calls", "plan_llm", "plan_to_wire",
]
