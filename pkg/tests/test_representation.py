import random

import pytest
from hypothesis import given, settings, strategies as st

from grid_agent.caseio import BUILTIN_CASES, builtin_network
from grid_agent.harness.scenarios import preset
from grid_agent.powerflow import solve
from grid_agent.representation import (
    FULL_DETAIL, SEMANTIC_GRAPH, all_element_keys, choose_mode, estimate_tokens, render,
    render_full, render_semantic_graph,
)
from grid_agent.violations import Violation, ViolationReport, analyze

from oracles import two_bus


def solved(net):
    sol = solve(net)
    return net, sol, analyze(net, sol)


def oracle_hops(net, seeds):
    """Plain repeated-relaxation distance, independent of the BFS in the renderer."""
    dist = {s: 0 for s in seeds}
    changed = True
    while changed:
        changed = False
        for br in net.branches.values():
            if not br.in_service:
                continue
            for a, b in ((br.from_bus, br.to_bus), (br.to_bus, br.from_bus)):
                if a in dist and dist[a] + 1 < dist.get(b, 10**9):
                    dist[b] = dist[a] + 1
                    changed = True
    return dist


def test_token_estimate_rounds_up():
    assert estimate_tokens("") == 0
    assert estimate_tokens("abcd") == 1
    assert estimate_tokens("abcde") == 2


def test_small_net_large_budget_is_full():
    net, sol, rep = solved(two_bus(p_pu=0.1))
    assert choose_mode(net, rep, 10_000, sol) == FULL_DETAIL


def test_ieee69_small_budget_is_semantic():
    net, sol, rep = solved(builtin_network("ieee69"))
    assert render_full(net, sol, rep).token_estimate > 500
    assert choose_mode(net, rep, 500, sol) == SEMANTIC_GRAPH


def test_budget_boundary_is_inclusive():
    net, sol, rep = solved(builtin_network("ieee69"))
    exact = render_full(net, sol, rep).token_estimate
    assert choose_mode(net, rep, exact, sol) == FULL_DETAIL
    assert choose_mode(net, rep, exact - 1, sol) == SEMANTIC_GRAPH


def test_nonpositive_budget_and_hops_rejected():
    net, sol, rep = solved(two_bus())
    with pytest.raises(ValueError):
        choose_mode(net, rep, 0, sol)
    with pytest.raises(ValueError):
        render_semantic_graph(net, sol, rep, hops=0)


def test_healthy_two_bus_full_structure():
    net, sol, rep = solved(two_bus(p_pu=0.1))
    ctx = render_full(net, sol, rep)
    lines = ctx.text.splitlines()
    assert sum(l.startswith("bus ") for l in lines) == 2
    viol = lines[lines.index("## violations") + 1]
    assert viol == "none"
    assert ctx.included_elements == frozenset(all_element_keys(net))


def test_undervoltage_bus_is_flagged_with_values():
    net, sol, _ = solved(builtin_network("ieee69"))
    rep = ViolationReport([Violation("undervoltage", "7", 0.93, 0.95, 0.02)])
    line = next(l for l in render_full(net, sol, rep).text.splitlines() if l.startswith("bus 7 "))
    assert "undervoltage" in line and "0.93" in line and "0.95" in line


def test_zero_violations_give_summary_block():
    net, sol, rep = solved(builtin_network("ieee69"))
    ctx = render_semantic_graph(net, sol, rep)
    assert "summary:" in ctx.text and "## " not in ctx.text
    assert ctx.included_elements == frozenset()


def test_ieee69_lateral_focus_matches_distance_oracle():
    net, sol, _ = solved(builtin_network("ieee69"))
    lateral = ["60", "61", "62"]
    rep = ViolationReport([Violation("undervoltage", b, 0.93, 0.95, 0.02) for b in lateral])
    ctx = render_semantic_graph(net, sol, rep, hops=3)
    dist = oracle_hops(net, lateral)
    near = {b for b, d in dist.items() if d <= 3}
    assert {k[4:] for k in ctx.included_elements if k.startswith("bus:")} == near
    for sid, sw in net.switches.items():
        br = net.branches[sw.branch_id]
        within = min(dist.get(br.from_bus, 99), dist.get(br.to_bus, 99)) <= 3
        assert (f"switch:{sid}" in ctx.included_elements) == within
    assert "## summarized" in ctx.text
    assert ctx.token_estimate < render_full(net, sol, rep).token_estimate


def test_large_radius_covers_everything():
    net, sol, rep = solved(preset("cigre_mv_severe").build())
    assert not rep.empty
    ctx = render_semantic_graph(net, sol, rep, hops=len(net.buses))
    assert ctx.included_elements == frozenset(all_element_keys(net))


def random_report(rng, net):
    picks = rng.sample(list(net.buses), rng.randint(1, 3))
    vs = [Violation("undervoltage", b, 0.9, 0.95, 0.05) for b in picks]
    if rng.random() < 0.5:
        vs.append(Violation("thermal", rng.choice(sorted(net.branches)), 1.2, 1.0, 0.2))
    return ViolationReport(vs)


@given(st.integers(0, 10**6), st.sampled_from(BUILTIN_CASES), st.integers(1, 4))
@settings(max_examples=60, deadline=None)
def test_coverage_invariant_both_modes(seed, name, hops):
    rng = random.Random(seed)
    net, sol, _ = solved(builtin_network(name))
    rep = random_report(rng, net)
    dist = oracle_hops(net, [v.element for v in rep.violations if v.kind != "thermal"]
                       + [b for v in rep.violations if v.kind == "thermal"
                          for b in (net.branches[v.element].from_bus, net.branches[v.element].to_bus)])
    for ctx in (render_full(net, sol, rep), render_semantic_graph(net, sol, rep, hops)):
        for v in rep.violations:
            assert v.element in ctx.text
            key = ("branch:" if v.kind == "thermal" else "bus:") + v.element
            assert key in ctx.included_elements
        for sid, sw in net.switches.items():
            br = net.branches[sw.branch_id]
            if min(dist.get(br.from_bus, 99), dist.get(br.to_bus, 99)) <= hops:
                assert f"switch:{sid}" in ctx.included_elements
        for lid, load in net.loads.items():
            if load.curtailable and dist.get(load.bus_id, 99) <= hops:
                assert f"load:{lid}" in ctx.included_elements


@given(st.integers(0, 10**6), st.sampled_from(BUILTIN_CASES))
@settings(max_examples=40, deadline=None)
def test_semantic_never_larger_when_something_is_pruned(seed, name):
    net, sol, _ = solved(builtin_network(name))
    rep = random_report(random.Random(seed), net)
    sem = render_semantic_graph(net, sol, rep)
    if "## summarized\n## violations" in sem.text:
        return  # nothing pruned
    assert sem.token_estimate <= render_full(net, sol, rep).token_estimate


def test_rendering_is_deterministic():
    for name in BUILTIN_CASES:
        a = render(*solved(builtin_network(name)), budget=300)
        b = render(*solved(builtin_network(name)), budget=300)
        assert a.text == b.text
