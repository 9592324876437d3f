"""Planner context rendering: a full listing or a violation-focused graph view."""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

from .model import Network
from .powerflow import PowerFlowSolution, solve
from .violations import Violation, ViolationReport

FULL_DETAIL = "full_detail"
SEMANTIC_GRAPH = "semantic_graph"
DEFAULT_HOPS = 3


@dataclass(frozen=True)
class NetworkContext:
    mode: str
    text: str
    token_estimate: int
    included_elements: frozenset[str] = field(default_factory=frozenset)
    focus_violations: tuple[Violation, ...] = ()


def estimate_tokens(text: str) -> int:
    return math.ceil(len(text) / 4)


def all_element_keys(net: Network) -> list[str]:
    keys = [f"bus:{b}" for b in net.buses]
    keys += [f"branch:{b}" for b in net.branches]
    keys += [f"switch:{s}" for s in net.switches]
    keys += [f"load:{l}" for l in net.loads]
    keys += [f"gen:{g}" for g in net.generators]
    keys += [f"battery:{b}" for b in net.batteries]
    return keys


def physical_adjacency(net: Network) -> dict[str, list[str]]:
    """Bus adjacency over every in-service branch, switch state ignored."""
    adj: dict[str, list[str]] = defaultdict(list)
    for br in net.branches.values():
        if br.in_service:
            adj[br.from_bus].append(br.to_bus)
            adj[br.to_bus].append(br.from_bus)
    return adj


def hop_distances(net: Network, seeds) -> dict[str, int]:
    """BFS hop count from the nearest seed bus over the physical graph."""
    adj = physical_adjacency(net)
    dist = {s: 0 for s in seeds if s in net.buses}
    queue = deque(dist)
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if v not in dist:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def violation_buses(net: Network, violations) -> list[str]:
    """Buses a set of violations sits on; a thermal breach counts both ends."""
    out: list[str] = []
    for v in violations:
        if v.kind == "thermal":
            br = net.branches[v.element]
            out += [br.from_bus, br.to_bus]
        else:
            out.append(v.element)
    return list(dict.fromkeys(out))


def _switch_state(net: Network, branch_id: str) -> str:
    sw = net.switch_for_branch(branch_id)
    if sw is None:
        return "fixed" if net.branches[branch_id].in_service else "out of service"
    return f"switch {sw.id} {'closed' if sw.closed else 'open'}"


def _bus_line(net, sol, bus_id, flags) -> str:
    bus = net.buses[bus_id]
    state = f"v={sol.v_pu[bus_id]:.4f} pu" if bus_id in sol.energized_buses else "de-energized"
    line = f"bus {bus_id} [{bus.kind}] {state} band [{bus.v_min_pu:.3f}, {bus.v_max_pu:.3f}]"
    for v in flags.get(("bus", bus_id), []):
        line += f" !{v.kind}" if v.observed is None else (
            f" !{v.kind} observed {v.observed:.4f} limit {v.limit:.4f}")
    return line


def _branch_line(net, sol, branch_id, flags) -> str:
    br = net.branches[branch_id]
    flow = sol.branches[branch_id]
    line = (f"branch {branch_id} {br.from_bus}--{br.to_bus} loading {flow.loading_percent:.1f}% "
            f"s={flow.s_mva:.3f}/{br.s_max_mva:.3f} MVA {_switch_state(net, branch_id)}")
    for v in flags.get(("branch", branch_id), []):
        line += f" !thermal observed {v.observed:.4f} limit {v.limit:.4f}"
    return line


def _load_line(net, load_id) -> str:
    ld = net.loads[load_id]
    line = f"load {load_id} at bus {ld.bus_id} p={ld.effective_p_mw:.4f} MW q={ld.q_mvar:.4f} Mvar"
    if ld.curtailable:
        line += f" curtailable gamma={ld.gamma:.2f} gamma_max={ld.gamma_max:.2f}"
    return line


def _gen_line(net, gen_id) -> str:
    g = net.generators[gen_id]
    return f"gen {gen_id} at bus {g.bus_id} p={g.p_mw:.4f} MW v_set={g.v_set_pu:.4f} pu"


def _battery_line(net, bat_id) -> str:
    b = net.batteries[bat_id]
    return (f"battery {bat_id} at bus {b.bus_id} p={b.p_mw:.4f} MW q={b.q_mvar:.4f} Mvar "
            f"s_max={b.s_max_mva:.3f} MVA")


def _violation_flags(report: ViolationReport) -> dict[tuple[str, str], list[Violation]]:
    flags: dict[tuple[str, str], list[Violation]] = defaultdict(list)
    for v in report.violations:
        flags[("branch" if v.kind == "thermal" else "bus", v.element)].append(v)
    return flags


def _violation_section(report: ViolationReport) -> list[str]:
    lines = ["## violations"]
    if report.empty:
        return lines + ["none"]
    return lines + [f"- {v.describe()}" for v in report.violations]


def _header(net: Network) -> str:
    return (f"# network {net.name or 'unnamed'}: {len(net.buses)} buses, {len(net.branches)} branches, "
            f"base {net.base_mva:g} MVA, batteries placed {net.placed_batteries()}/{net.battery_budget}")


def render_full(net: Network, sol: PowerFlowSolution, report: ViolationReport) -> NetworkContext:
    flags = _violation_flags(report)
    lines = [_header(net), "## buses"]
    lines += [_bus_line(net, sol, b, flags) for b in net.buses]
    lines.append("## branches")
    lines += [_branch_line(net, sol, b, flags) for b in net.branches]
    lines.append("## loads")
    lines += [_load_line(net, l) for l in net.loads]
    lines.append("## generators")
    lines += [_gen_line(net, g) for g in net.generators]
    lines.append("## batteries")
    lines += [_battery_line(net, b) for b in net.batteries] or ["none"]
    lines += _violation_section(report)
    text = "\n".join(lines) + "\n"
    return NetworkContext(FULL_DETAIL, text, estimate_tokens(text),
                          frozenset(all_element_keys(net)), tuple(report.violations))


def _summary_block(net: Network, sol: PowerFlowSolution) -> str:
    live = [b for b in net.buses if b in sol.energized_buses]
    worst_v = min((sol.v_pu[b] for b in live), default=0.0)
    max_loading = max((f.loading_percent for f in sol.branches.values()), default=0.0)
    total_p = sum(l.effective_p_mw for l in net.loads.values())
    return (f"{_header(net)}\n"
            f"summary: all limits satisfied; total load {total_p:.3f} MW; "
            f"lowest voltage {worst_v:.4f} pu; highest branch loading {max_loading:.1f}%\n"
            f"controllables: {len(net.switches)} switches, "
            f"{sum(l.curtailable for l in net.loads.values())} curtailable loads\n")


def _compact_bus_line(net, sol, bus_id, dist, loads_at, gens_at) -> str:
    state = f"v={sol.v_pu[bus_id]:.4f}" if bus_id in sol.energized_buses else "de-energized"
    line = f"bus {bus_id} {state} hops={dist}"
    fixed = [l for l in loads_at.get(bus_id, []) if not net.loads[l].curtailable]
    if fixed:
        p = sum(net.loads[l].effective_p_mw for l in fixed)
        line += f" loads {','.join(fixed)} {p:.3f} MW"
    if gens_at.get(bus_id):
        line += f" gen {','.join(gens_at[bus_id])}"
    return line


def render_semantic_graph(net: Network, sol: PowerFlowSolution, report: ViolationReport,
                          hops: int = DEFAULT_HOPS) -> NetworkContext:
    """Violations in full, controllables within ``hops``, the rest summarized."""
    if hops < 1:
        raise ValueError("hops must be >= 1")
    if report.empty:
        text = _summary_block(net, sol)
        return NetworkContext(SEMANTIC_GRAPH, text, estimate_tokens(text), frozenset(), ())
    flags = _violation_flags(report)
    dist = hop_distances(net, violation_buses(net, report.violations))
    near = [b for b in net.buses if dist.get(b, hops + 1) <= hops]
    near_set = set(near)
    branches = [b for b, br in net.branches.items()
                if min(dist.get(br.from_bus, hops + 1), dist.get(br.to_bus, hops + 1)) <= hops
                or ("branch", b) in flags]
    branch_set = set(branches)
    switches = [s for s, sw in net.switches.items() if sw.branch_id in branch_set]
    loads = [l for l, ld in net.loads.items() if ld.bus_id in near_set]
    gens = [g for g, gen in net.generators.items() if gen.bus_id in near_set]
    bats = [b for b, bat in net.batteries.items() if bat.bus_id in near_set]
    loads_at: dict[str, list[str]] = defaultdict(list)
    for l in loads:
        loads_at[net.loads[l].bus_id].append(l)
    gens_at: dict[str, list[str]] = defaultdict(list)
    for g in gens:
        gens_at[net.generators[g].bus_id].append(g)

    lines = [_header(net), f"## focus buses (<= {hops} hops)"]
    for b in near:
        if ("bus", b) in flags:
            lines.append(_bus_line(net, sol, b, flags))
        else:
            lines.append(_compact_bus_line(net, sol, b, dist[b], loads_at, gens_at))
    lines.append("## edges")
    for b in branches:
        br = net.branches[b]
        if ("branch", b) in flags or net.switch_for_branch(b) is not None:
            lines.append(_branch_line(net, sol, b, flags))
        else:
            lines.append(f"{br.from_bus}--{br.to_bus} {sol.branches[b].loading_percent:.0f}%")
    lines.append("## controllables")
    lines += [_load_line(net, l) for l in loads if net.loads[l].curtailable]
    lines += [_battery_line(net, b) for b in bats]
    lines.append(f"battery slots free: {net.battery_budget - net.placed_batteries()}")
    lines.append("## summarized")
    lines += _pruned_summaries(net, sol, near_set)
    lines += _violation_section(report)
    text = "\n".join(lines) + "\n"
    included = ([f"bus:{b}" for b in near] + [f"branch:{b}" for b in branches]
                + [f"switch:{s}" for s in switches] + [f"load:{l}" for l in loads]
                + [f"gen:{g}" for g in gens] + [f"battery:{b}" for b in bats])
    return NetworkContext(SEMANTIC_GRAPH, text, estimate_tokens(text), frozenset(included),
                          tuple(report.violations))


def _pruned_summaries(net: Network, sol: PowerFlowSolution, kept: set[str]) -> list[str]:
    adj = physical_adjacency(net)
    seen = set(kept)
    out = []
    for start in net.buses:
        if start in seen:
            continue
        comp, queue = [], deque([start])
        seen.add(start)
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        load = sum(l.effective_p_mw for l in net.loads.values() if l.bus_id in set(comp))
        live = [sol.v_pu[b] for b in comp if b in sol.energized_buses]
        worst = f"{min(live):.4f}" if live else "n/a"
        order = {b: i for i, b in enumerate(net.buses)}
        comp.sort(key=order.__getitem__)
        out.append(f"{len(comp)} buses from {comp[0]}: {load:.3f} MW, min v {worst}")
    return out


def choose_mode(net: Network, report: ViolationReport, budget: int,
                sol: PowerFlowSolution | None = None) -> str:
    """full_detail iff the full rendering fits the token budget (inclusive)."""
    if budget <= 0:
        raise ValueError("budget must be positive")
    sol = sol if sol is not None else solve(net)
    full = render_full(net, sol, report)
    return FULL_DETAIL if full.token_estimate <= budget else SEMANTIC_GRAPH


def render(net: Network, sol: PowerFlowSolution, report: ViolationReport, budget: int,
           hops: int = DEFAULT_HOPS) -> NetworkContext:
    if choose_mode(net, report, budget, sol) == FULL_DETAIL:
        return render_full(net, sol, report)
    return render_semantic_graph(net, sol, report, hops)
