"""Shared test fixtures: random plans, scripted planners, crafted networks."""

from __future__ import annotations

import json
import random
from pathlib import Path

import numpy as np

from grid_agent.actions import AddBattery, CurtailLoad, DispatchBattery, SetSwitch, next_battery_id
from grid_agent.model import Network
from grid_agent.planner import Capabilities, Plan, PlanRequest, make_sandbox_eval
from grid_agent.model import build_admittance
from grid_agent.powerflow import (
    BranchFlow, Island, PowerFlowSolution, find_islands, power_mismatch, scheduled_injections, solve,
)
from grid_agent.representation import render
from grid_agent.violations import analyze, is_improvement


def random_action(rng: random.Random, net: Network, pending: set[str], valid_bias: float = 0.8):
    """One action against ``net``; mostly valid, sometimes deliberately not.

    ``pending`` collects battery ids created earlier in the same plan so a
    dispatch can target them.
    """
    kinds = ["switch", "curtail", "add", "dispatch"]
    kind = rng.choice(kinds)
    valid = rng.random() < valid_bias
    if kind == "switch" and net.switches:
        sid = rng.choice(sorted(net.switches)) if valid else "NOPE"
        return SetSwitch(sid, rng.random() < 0.5)
    if kind == "curtail":
        loads = sorted(l.id for l in net.loads.values() if l.curtailable)
        if loads and valid:
            lid = rng.choice(loads)
            return CurtailLoad(lid, round(rng.uniform(0, net.loads[lid].gamma_max), 3))
        return CurtailLoad(rng.choice(sorted(net.loads)), round(rng.uniform(0, 1.2), 3))
    if kind == "add":
        bus = rng.choice(sorted(net.buses)) if valid else "NOPE"
        a = AddBattery(bus, s_max_mva=round(rng.uniform(0.5, 5), 3),
                       p_max_mw=round(rng.uniform(0.5, 5), 3), q_max_mvar=round(rng.uniform(0.5, 5), 3))
        pending.add(next_battery_id(net, pending))
        return a
    ids = sorted(set(net.batteries) | pending) or ["BAT1"]
    bid = rng.choice(ids)
    s = rng.uniform(0, 6)
    return DispatchBattery(bid, round(rng.uniform(-s, s), 3), round(rng.uniform(-s, s), 3))


def random_plan(rng: random.Random, net: Network, max_len: int = 10) -> list:
    pending: set[str] = set()
    return [random_action(rng, net, pending) for _ in range(rng.randint(0, max_len))]


class ScriptedPlanner:
    """Returns canned plans in order; raises once the script runs out."""

    def __init__(self, plans, planner_id="scripted"):
        self.plans = list(plans)
        self.planner_id = planner_id
        self.requests = []

    def propose(self, req):
        self.requests.append(req)
        if not self.plans:
            raise RuntimeError("script exhausted")
        item = self.plans.pop(0)
        if isinstance(item, Exception):
            raise item
        return item if isinstance(item, Plan) else Plan(tuple(item), "scripted", self.planner_id)


class WorseningPlanner:
    """Proposes the single switch toggle that hurts the most: never an improvement.

    Falls back to an empty plan, which changes nothing and so cannot
    improve either.
    """

    planner_id = "adversary"

    def propose(self, req):
        net = req.network
        evaluate = make_sandbox_eval(net)
        worst = None
        for sid in sorted(net.switches):
            acts = (SetSwitch(sid, not net.switches[sid].closed),)
            rep = evaluate(acts)
            if rep is None or is_improvement(req.report, rep):
                continue
            rank = (len(rep), rep.total_severity)
            if worst is None or rank > worst[0]:
                worst = (rank, acts)
        if worst is not None:
            return Plan(worst[1], "make things worse", self.planner_id)
        return Plan((), "do nothing", self.planner_id)


class FailingPlanner:
    planner_id = "broken"

    def propose(self, req):
        raise RuntimeError("planner crashed")


def make_request(net: Network, budget: int = 4000, history=()):
    """A planner request for ``net`` as the workflow would build it."""
    sol = solve(net)
    rep = analyze(net, sol)
    ctx = render(net, sol, rep, budget)
    return PlanRequest(ctx, Capabilities.from_network(net), history=tuple(history),
                       network=net.copy(), report=rep)


FIXTURES = Path(__file__).parent / "fixtures" / "llm"


class FixtureTransport:
    """Replays recorded model replies in order and keeps every request body."""

    def __init__(self, replies):
        self.replies = list(replies)
        self.bodies = []

    @classmethod
    def load(cls, name: str) -> "FixtureTransport":
        return cls(json.loads((FIXTURES / f"{name}.json").read_text())["replies"])

    def __call__(self, body, cfg):
        self.bodies.append(body)
        if not self.replies:
            raise AssertionError("transport called more often than recorded")
        return self.replies.pop(0)


def fixture_case(name: str) -> str:
    return json.loads((FIXTURES / f"{name}.json").read_text())["case"]


def live_system(net):
    live = next(i for i in find_islands(net) if i.energized)
    adm = build_admittance(net, live.buses)
    sched = scheduled_injections(net)
    S = np.array([sched.get(b, 0j) for b in adm.bus_ids])
    kinds = [net.buses[b].kind for b in adm.bus_ids]
    pv = np.array([i for i, k in enumerate(kinds) if k == "pv"], dtype=int)
    pq = np.array([i for i, k in enumerate(kinds) if k == "pq"], dtype=int)
    return adm, S, pv, pq


def fd_jacobian(Y, V, S, pv, pq, h=1e-6):
    Va, Vm = np.angle(V), np.abs(V)
    pvpq = np.r_[pv, pq]
    x0 = np.r_[Va[pvpq], Vm[pq]]
    cols = []
    for k in range(len(x0)):
        out = []
        for sign in (1, -1):
            x = x0.copy()
            x[k] += sign * h
            a, m = Va.copy(), Vm.copy()
            a[pvpq] = x[:len(pvpq)]
            m[pq] = x[len(pvpq):]
            out.append(power_mismatch(Y, m * np.exp(1j * a), S, pv, pq))
        cols.append((out[0] - out[1]) / (2 * h))
    return np.array(cols).T


def fake_solution(net, v_pu, loading, dark=()):
    live = tuple(b for b in net.buses if b not in dark and net.buses[b].in_service)
    islands = [Island(live, True)] + ([Island(tuple(dark), False)] if dark else [])
    flows = {bid: BranchFlow(loading_percent=loading.get(bid, 0.0)) for bid in net.branches}
    return PowerFlowSolution(
        v_pu={b: (0.0 if b in dark else v_pu.get(b, 1.0)) for b in net.buses},
        theta_rad=dict.fromkeys(net.buses, 0.0), branches=flows, converged=True, iterations=1,
        max_mismatch_pu=0.0, islands=islands, network_digest=net.digest())


def random_solution(rng, net):
    dark = tuple(b for b in list(net.buses)[1:] if rng.random() < 0.15)
    v = {b: rng.uniform(0.85, 1.15) for b in net.buses}
    # a few values exactly on the band edges exercise the inclusive bounds
    for b in rng.sample(list(net.buses), min(2, len(net.buses))):
        v[b] = rng.choice([net.buses[b].v_min_pu, net.buses[b].v_max_pu])
    loading = {bid: rng.choice([100.0, rng.uniform(0, 180)]) for bid in net.branches}
    return fake_solution(net, v, loading, dark), v, loading, dark


def progress_counterexamples(result) -> list[str]:
    """Accepted iterations whose (count, severity) did not strictly drop."""
    bad = []
    for att in result.attempts:
        if att.outcome != "accepted":
            continue
        before = (len(att.before), att.before.total_severity)
        after = (len(att.after), att.after.total_severity)
        if not (after[0] < before[0] or (after[0] == before[0] and after[1] < before[1])):
            bad.append(f"iteration {att.iteration}: {before} -> {after}")
    return bad


# PASS/FAIL lines from the acceptance tests, echoed in the terminal summary
ACCEPTANCE_LINES: list[str] = []


def record_criterion(number: int, ok: bool, detail: str) -> None:
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
