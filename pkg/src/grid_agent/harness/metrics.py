"""Per-run quality metrics."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from ..actions import action_buses
from ..model import Network
from ..representation import DEFAULT_HOPS, hop_distances, violation_buses
from ..violations import ViolationReport
from ..workflow import ACCEPTED, RESOLVED, ResolutionResult

TOOLS = ("update_switch_status", "add_battery", "dispatch_battery", "curtail_load")


@dataclass(frozen=True)
class RunMetrics:
    """``action_efficiency`` and ``coordination_score`` are None when no
    action was accepted."""

    success: bool
    iterations: int
    total_actions: int
    runtime_seconds: float
    action_efficiency: float | None
    coordination_score: float | None
    usage: dict[str, float] = field(default_factory=dict)

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "success": self.success,
            "iterations": self.iterations,
            "total_actions": self.total_actions,
            "action_efficiency": self.action_efficiency,
            "coordination_score": self.coordination_score,
            "usage": dict(self.usage),
        }
        if include_timing:
            d["runtime_seconds"] = self.runtime_seconds
        return d


def compute_metrics(result: ResolutionResult, initial_report: ViolationReport | None = None,
                    net: Network | None = None, h: int = DEFAULT_HOPS) -> RunMetrics:
    """Success, efficiency (initial violations resolved per accepted action)
    and the share of accepted actions within ``h`` hops of a violation that
    was active when their plan was proposed."""
    initial = initial_report if initial_report is not None else result.initial_report
    net = result.network if net is None else net
    actions = [a for _, a in result.accepted_actions]
    n = len(actions)
    resolved = len(initial.keys - result.final_report.keys)
    efficiency = resolved / n if n else None

    active_at = {att.iteration: att.before for att in result.attempts if att.outcome == ACCEPTED}
    near = 0
    for t, a in result.accepted_actions:
        before = active_at.get(t, initial)
        dist = hop_distances(net, violation_buses(net, before.violations))
        # the final network knows every battery an accepted action refers to
        if any(dist.get(b, h + 1) <= h for b in action_buses(result.network, a)):
            near += 1
    coordination = near / n if n else None

    tally = Counter(a.tool for a in actions)
    usage = {tool: (tally[tool] / n if n else 0.0) for tool in TOOLS}
    return RunMetrics(result.status == RESOLVED, result.iterations, n, result.wall_time_s,
                      efficiency, coordination, usage)
