"""Planner interface: requests, plans and the action-space descriptor."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Protocol

from ..actions import (
    DEFAULT_BATTERY_P_MW,
    DEFAULT_BATTERY_Q_MVAR,
    DEFAULT_BATTERY_S_MVA,
    Action,
    PlanAborted,
    action_from_dict,
    action_to_dict,
    apply_plan,
)
from ..model import Network
from ..powerflow import PowerFlowError, solve
from ..representation import NetworkContext
from ..violations import AnalysisError, ViolationReport, analyze

PRIORITY_POLICY = (
    "Prefer actions in this order: "
    "(1) topology reconfiguration with update_switch_status, "
    "(2) battery placement and dispatch with add_battery / dispatch_battery, "
    "(3) load curtailment with curtail_load. "
    "This ordering is guidance; use a lower-priority action when higher ones cannot help."
)


class PlannerError(RuntimeError):
    pass


class NoImprovingPlan(PlannerError):
    pass


@dataclass(frozen=True)
class BatteryInfo:
    bus_id: str
    s_max_mva: float
    p_max_mw: float
    q_max_mvar: float
    placed: bool = True


@dataclass(frozen=True)
class Capabilities:
    """What a planner may touch on the network it was built from."""

    buses: tuple[str, ...]
    switches: dict[str, bool]
    switch_branches: dict[str, tuple[str, str]]
    curtailable_loads: dict[str, float]
    battery_slots: int
    batteries: dict[str, BatteryInfo] = field(default_factory=dict)
    battery_defaults: tuple[float, float, float] = (
        DEFAULT_BATTERY_S_MVA, DEFAULT_BATTERY_P_MW, DEFAULT_BATTERY_Q_MVAR)

    @classmethod
    def from_network(cls, net: Network) -> "Capabilities":
        return cls(
            buses=tuple(net.buses),
            switches={s: sw.closed for s, sw in net.switches.items()},
            switch_branches={s: (net.branches[sw.branch_id].from_bus, net.branches[sw.branch_id].to_bus)
                             for s, sw in net.switches.items()},
            curtailable_loads={l.id: l.gamma_max for l in net.loads.values() if l.curtailable},
            battery_slots=max(net.battery_budget - net.placed_batteries(), 0),
            batteries={b.id: BatteryInfo(b.bus_id, b.s_max_mva, b.p_max_mw, b.q_max_mvar, b.placed)
                       for b in net.batteries.values()},
        )

    @property
    def empty(self) -> bool:
        return not (self.switches or self.curtailable_loads or self.battery_slots
                    or any(b.placed for b in self.batteries.values()))

    def to_dict(self) -> dict:
        return {
            "switches": dict(self.switches),
            "curtailable_loads": dict(self.curtailable_loads),
            "battery_slots": self.battery_slots,
            "batteries": {k: vars(v) for k, v in self.batteries.items()},
            "battery_defaults": list(self.battery_defaults),
        }


@dataclass(frozen=True)
class PlanRequest:
    """Everything a planner sees for one iteration.

    ``network`` and ``report`` are the sandbox state the request describes;
    the heuristic planner searches on copies of it. LLM planners only read
    the rendered ``context``.
    """

    context: NetworkContext
    available_actions: Capabilities
    t_max_remaining: int = 10
    policy: str = PRIORITY_POLICY
    history: tuple[str, ...] = ()
    network: Network | None = None
    report: ViolationReport | None = None


@dataclass(frozen=True)
class Plan:
    actions: tuple[Action, ...]
    rationale: str = ""
    planner_id: str = ""

    def to_dict(self) -> dict:
        return {"actions": [action_to_dict(a) for a in self.actions],
                "rationale": self.rationale, "planner_id": self.planner_id}

    @classmethod
    def from_dict(cls, d: dict) -> "Plan":
        return cls(tuple(action_from_dict(a) for a in d["actions"]), d.get("rationale", ""),
                   d.get("planner_id", ""))


class Planner(Protocol):
    planner_id: str

    def propose(self, req: PlanRequest) -> Plan: ...


SandboxEval = Callable[[tuple[Action, ...]], "ViolationReport | None"]


def make_sandbox_eval(net: Network) -> SandboxEval:
    """Evaluate candidate plans on throwaway copies of ``net``.

    Returns None for plans that are invalid or whose power flow fails.
    """
    def evaluate(actions) -> ViolationReport | None:
        scratch = net.copy()
        try:
            apply_plan(scratch, actions)
            return analyze(scratch, solve(scratch))
        except (PlanAborted, PowerFlowError, AnalysisError):
            return None
    return evaluate
