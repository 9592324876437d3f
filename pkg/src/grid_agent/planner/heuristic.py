"""Deterministic tiered search: switching, then batteries, then curtailment."""

from __future__ import annotations

import itertools
import math
from collections import deque
from dataclasses import dataclass

from ..actions import AddBattery, CurtailLoad, DispatchBattery, SetSwitch, next_battery_id
from ..model import Network, active_branches
from ..powerflow import solve
from ..representation import DEFAULT_HOPS, hop_distances, violation_buses
from ..violations import ViolationReport, analyze, is_improvement
from .base import NoImprovingPlan, Plan, PlanRequest, SandboxEval, make_sandbox_eval

GAMMA_STEP = 0.1
Q_STEP_FRACTION = 0.2


def _element_ids(actions) -> tuple[str, ...]:
    out = []
    for a in actions:
        out.append(getattr(a, "switch_id", None) or getattr(a, "load_id", None)
                   or getattr(a, "bus_id", None) or getattr(a, "battery_id", ""))
    return tuple(out)


def _rank(report: ViolationReport, actions) -> tuple:
    return (len(report), round(report.total_severity, 12), len(actions), _element_ids(actions))


def _sheds_load(before: ViolationReport, after: ViolationReport) -> bool:
    return any(k[0] == "disconnected" for k in after.keys - before.keys)


def _acceptable(before: ViolationReport, after: ViolationReport | None) -> bool:
    """Improves on ``before`` without de-energizing any further bus."""
    return after is not None and is_improvement(before, after) and not _sheds_load(before, after)


def _best(candidates, before: ViolationReport):
    """Lowest-ranked acceptable candidate, or None."""
    good = [(_rank(rep, acts), acts, rep) for acts, rep in candidates if _acceptable(before, rep)]
    if not good:
        return None
    good.sort(key=lambda t: t[0])
    return good[0][1], good[0][2]


def _switch_candidates(net: Network, report: ViolationReport, hops: int, limit: int) -> list[str]:
    dist = hop_distances(net, violation_buses(net, report.violations))
    far = hops + 1
    scored = []
    for sid, sw in net.switches.items():
        br = net.branches[sw.branch_id]
        d = min(dist.get(br.from_bus, far), dist.get(br.to_bus, far))
        if d <= hops:
            scored.append((d, sid))
    scored.sort()
    return [sid for _, sid in scored[:limit]]


def _feeding_tree(net: Network) -> dict[str, str | None]:
    """Parent branch of each energized bus in a BFS tree from the slack."""
    adj: dict[str, list[tuple[str, str]]] = {b: [] for b in net.buses}
    for br in active_branches(net):
        adj[br.from_bus].append((br.to_bus, br.id))
        adj[br.to_bus].append((br.from_bus, br.id))
    slack = net.slack_bus
    parent: dict[str, str | None] = {slack: None}
    queue = deque([slack])
    while queue:
        u = queue.popleft()
        for v, bid in adj[u]:
            if v not in parent:
                parent[v] = bid
                queue.append(v)
    return parent


def _downstream_buses(net: Network, branch_id: str) -> set[str]:
    """Buses that lose supply if ``branch_id`` is cut, or the far side's
    neighbourhood when the branch lies in a loop."""
    adj: dict[str, list[str]] = {b: [] for b in net.buses}
    for br in active_branches(net):
        if br.id == branch_id:
            continue
        adj[br.from_bus].append(br.to_bus)
        adj[br.to_bus].append(br.from_bus)
    slack = net.slack_bus
    seen = {slack}
    queue = deque([slack])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                queue.append(v)
    br = net.branches[branch_id]
    cut = {br.from_bus, br.to_bus} - seen
    if cut:
        return {b for b in net.buses if b not in seen and net.buses[b].in_service}
    dist = hop_distances(net, [net.slack_bus])
    far_end = max((br.from_bus, br.to_bus), key=lambda b: (dist.get(b, 0), b))
    near = hop_distances(net, [far_end])
    return {b for b, d in near.items() if d <= DEFAULT_HOPS and dist.get(b, 0) >= dist.get(far_end, 0)}


def _gamma_grid(start: float, gamma_max: float) -> list[float]:
    steps = []
    k = math.floor(start / GAMMA_STEP + 1e-9) + 1
    while k * GAMMA_STEP <= gamma_max + 1e-9:
        steps.append(round(k * GAMMA_STEP, 10))
        k += 1
    return steps


@dataclass
class HeuristicPlanner:
    """Priority-ordered local search evaluated on sandbox copies."""

    hops: int = DEFAULT_HOPS
    candidate_limit: int = 12
    planner_id: str = "heuristic"

    def propose(self, req: PlanRequest) -> Plan:
        if req.network is None:
            raise ValueError("heuristic planning needs the sandbox network in the request")
        return plan_heuristic(req, make_sandbox_eval(req.network), hops=self.hops,
                              candidate_limit=self.candidate_limit, planner_id=self.planner_id)


def plan_heuristic(req: PlanRequest, sandbox_eval: SandboxEval, hops: int = DEFAULT_HOPS,
                   candidate_limit: int = 12, planner_id: str = "heuristic") -> Plan:
    """Return the first tier's best improving plan.

    Raises:
        NoImprovingPlan: no tier produced an improvement.
    """
    net = req.network
    before = req.report if req.report is not None else analyze(net, solve(net))
    if before.empty:
        raise NoImprovingPlan("no violations to resolve")
    for tier in (_tier_switching, _tier_battery, _tier_curtailment):
        found = tier(net, before, sandbox_eval, hops, candidate_limit)
        if found is not None:
            actions, rationale = found
            return Plan(tuple(actions), rationale, planner_id)
    raise NoImprovingPlan("no switching, battery or curtailment candidate improved the violation set")


def _tier_switching(net, before, sandbox_eval, hops, limit):
    ids = _switch_candidates(net, before, hops, limit)
    singles = [(SetSwitch(s, not net.switches[s].closed),) for s in ids]
    evaluated = [(acts, sandbox_eval(acts)) for acts in singles]
    pairs = [a + b for a, b in itertools.combinations(singles, 2)]
    evaluated += [(acts, sandbox_eval(acts)) for acts in pairs]
    best = _best(evaluated, before)
    if best is None:
        return None
    acts, rep = best
    moves = ", ".join(f"{'close' if a.closed else 'open'} {a.switch_id}" for a in acts)
    return list(acts), (f"Reconfigure topology ({moves}): violations {len(before)} -> {len(rep)}.")


def _tier_battery(net, before, sandbox_eval, hops, limit):
    under = [v for v in before.violations if v.kind == "undervoltage"]
    if not under:
        return None
    target = max(under, key=lambda v: (v.severity, v.element))
    existing = sorted(b.id for b in net.batteries.values() if b.placed and b.bus_id == target.element)
    if existing:
        bat = net.batteries[existing[0]]
        bid, prefix, s_max, q_max = bat.id, [], bat.s_max_mva, bat.q_max_mvar
    elif net.placed_batteries() < net.battery_budget:
        add = AddBattery(target.element)
        bid, prefix, s_max, q_max = next_battery_id(net), [add], add.s_max_mva, add.q_max_mvar
    else:
        return None
    q_cap = min(s_max, q_max)
    evaluated = []
    k = 1
    while True:
        q = min(k * Q_STEP_FRACTION * s_max, q_cap)
        acts = tuple(prefix + [DispatchBattery(bid, 0.0, round(q, 10))])
        rep = sandbox_eval(acts)
        evaluated.append((acts, rep))
        if rep is not None and target.key not in rep.keys:
            break
        if q >= q_cap - 1e-12:
            break
        k += 1
    best = _best(evaluated, before)
    if best is None:
        return None
    acts, rep = best
    q = acts[-1].q_mvar
    verb = "Place" if prefix else "Redispatch"
    return list(acts), (f"{verb} battery {bid} at bus {target.element} injecting {q:g} Mvar "
                        f"for voltage support: violations {len(before)} -> {len(rep)}.")


def _curtail_targets(net, before):
    """(violation key, branch) pairs to relieve: overloads first, then
    undervoltages via the branch feeding the bus."""
    parent = _feeding_tree(net)
    out = []
    for v in sorted(before.violations, key=lambda v: (-v.severity, v.element)):
        if v.kind == "thermal":
            out.append((v.key, v.element))
    for v in sorted(before.violations, key=lambda v: (-v.severity, v.element)):
        if v.kind == "undervoltage" and parent.get(v.element):
            out.append((v.key, parent[v.element]))
    return out


def _tier_curtailment(net, before, sandbox_eval, hops, limit):
    plan: dict[str, float] = {}

    def as_actions(gammas):
        return tuple(CurtailLoad(l, g) for l, g in sorted(gammas.items()))

    current = before
    for key, branch_id in _curtail_targets(net, before):
        if key not in current.keys:
            continue
        down = _downstream_buses(net, branch_id)
        loads = sorted((l for l in net.loads.values() if l.curtailable and l.bus_id in down),
                       key=lambda l: (-l.effective_p_mw, l.id))
        cleared = False
        for load in loads:
            start = plan.get(load.id, load.gamma)
            for g in _gamma_grid(start, load.gamma_max):
                trial = dict(plan, **{load.id: g})
                rep = sandbox_eval(as_actions(trial))
                if rep is None:
                    break
                plan, current = trial, rep
                if key not in rep.keys:
                    cleared = True
                    break
            if cleared:
                break
    if not plan or not _acceptable(before, current):
        return None
    acts = as_actions(plan)
    desc = ", ".join(f"{a.load_id} by {a.gamma:.0%}" for a in acts)
    return list(acts), f"Curtail {desc}: violations {len(before)} -> {len(current)}."
