"""Regenerate the built-in benchmark case files in src/grid_agent/data/.

Sources:
  ieee30   MATPOWER case30.m (vendored under tools/matpower, BSD licence).
  cigre_mv CIGRE TF C6.04.02 MV European feeder, line types and loads as
           published (per-km cable/overhead parameters, cos-phi loads).
  ieee69   MATPOWER case69.m (Baran & Wu), ohm/kW data.

Line ratings are raised where needed so every base case is violation-free:
a rating is kept if the base flow stays below 80 % of it, otherwise it is set
to 1.25x the base flow, rounded up. Run from the repository root:

    python tools/make_builtins.py
"""

from __future__ import annotations

import math
import re
import sys
import warnings
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "src"))

from grid_agent.caseio import document_from_network, parse_matpower_subset, serialize_case  # noqa: E402
from grid_agent.model import (  # noqa: E402
    Branch, Bus, Generator, Load, Network, Switch, check_network, impedance_base,
)
from grid_agent.powerflow import solve  # noqa: E402
from grid_agent.violations import analyze  # noqa: E402

DATA = ROOT / "src" / "grid_agent" / "data"
MATPOWER = ROOT / "tools" / "matpower"


def _i_from_s(s_mva: float, kv: float) -> float:
    return s_mva / (math.sqrt(3.0) * kv)


def relax_ratings(net: Network, headroom: float = 0.8) -> None:
    sol = solve(net)
    assert sol.converged
    for bid, flow in sol.branches.items():
        br = net.branches[bid]
        if flow.loading_percent <= 100 * headroom:
            continue
        kv = net.buses[br.from_bus].nominal_kv
        s_need = max(flow.s_mva, flow.i_ka * math.sqrt(3.0) * kv) / headroom
        br.s_max_mva = float(math.ceil(s_need * 10) / 10)
        br.i_max_ka = round(_i_from_s(br.s_max_mva, kv), 6)


def ieee30() -> Network:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        doc = parse_matpower_subset((MATPOWER / "case30.m").read_text())
    payload = doc.payload
    # voltage levels from the original IEEE data: 132 kV grid, 33 kV sub-transmission
    hv = {"1", "2", "3", "4", "5", "6", "7", "8", "28"}
    pu_z = {}
    for br in payload["branches"]:
        zb = impedance_base(135.0, payload["base_mva"])
        pu_z[br["id"]] = (br["r_ohm"] / zb, br["x_ohm"] / zb, br["b_total_shunt_siemens"] * zb)
    for bus in payload["buses"]:
        bus["nominal_kv"] = 132.0 if bus["id"] in hv else 33.0
    kv = {b["id"]: b["nominal_kv"] for b in payload["buses"]}
    for br in payload["branches"]:
        r, x, b = pu_z[br["id"]]
        zb = impedance_base(kv[br["from_bus"]], payload["base_mva"])
        br["r_ohm"], br["x_ohm"], br["b_total_shunt_siemens"] = r * zb, x * zb, b / zb
        br["i_max_ka"] = round(_i_from_s(br["s_max_mva"], kv[br["from_bus"]]), 6)
    from grid_agent.model import build_network
    payload["name"] = "ieee30"
    net = build_network(payload)
    # controllables: one switchable tie in the 33 kV area plus two curtailable loads
    net.branches["10-22"].switchable = True
    net.switches["SW1"] = Switch("SW1", "10-22", closed=True)
    for lid in ("L7", "L21"):
        net.loads[lid].curtailable = True
        net.loads[lid].gamma_max = 0.5
    net.battery_budget = 2
    relax_ratings(net)
    return net


CABLE = dict(r=0.501, x=0.716, c_nf=151.1749, i_ka=0.145)
OHL = dict(r=0.510, x=0.366, c_nf=10.09679, i_ka=0.195)


def cigre_mv() -> Network:
    """14-bus CIGRE MV feeder (20 kV).

    The 110 kV grid bus and the two 110/20 kV transformers are replaced by a
    slack at bus 1; the feeder that the second transformer fed (buses 12-14)
    is supplied through tie switch S1, closed. Bus-1 and bus-12 lumped
    substation loads are omitted, leaving 11 aggregated loads on buses 3-11,
    13 and 14.
    """
    net = Network(base_mva=10.0, name="cigre_mv", battery_budget=2)
    for i in range(1, 15):
        net.buses[str(i)] = Bus(str(i), f"Bus {i}", 20.0, "slack" if i == 1 else "pq")
    net.generators["G1"] = Generator("G1", "1", 0.0, 1.03)
    lines = [
        ("1-2", 1, 2, 2.82, CABLE), ("2-3", 2, 3, 4.42, CABLE), ("3-4", 3, 4, 0.61, CABLE),
        ("4-5", 4, 5, 0.56, CABLE), ("5-6", 5, 6, 1.54, CABLE), ("7-8", 7, 8, 1.67, CABLE),
        ("8-9", 8, 9, 0.32, CABLE), ("9-10", 9, 10, 0.77, CABLE), ("10-11", 10, 11, 0.33, CABLE),
        ("3-8", 3, 8, 1.3, CABLE), ("12-13", 12, 13, 4.89, OHL), ("13-14", 13, 14, 2.99, OHL),
        ("6-7", 6, 7, 0.24, CABLE), ("11-4", 11, 4, 0.49, CABLE), ("14-8", 14, 8, 2.0, OHL),
    ]
    for bid, f, t, km, kind in lines:
        s_max = math.sqrt(3.0) * 20.0 * kind["i_ka"]
        net.branches[bid] = Branch(
            bid, str(f), str(t), r_ohm=round(kind["r"] * km, 6), x_ohm=round(kind["x"] * km, 6),
            b_total_shunt_siemens=round(2 * math.pi * 50 * kind["c_nf"] * 1e-9 * km, 9),
            s_max_mva=round(s_max, 3), i_max_ka=kind["i_ka"],
            switchable=bid in ("6-7", "11-4", "14-8"))
    net.switches["S1"] = Switch("S1", "14-8", closed=True)
    net.switches["S2"] = Switch("S2", "6-7", closed=False)
    net.switches["S3"] = Switch("S3", "11-4", closed=False)
    # (bus, [(MVA, cos phi), ...]) residential + commercial/industrial
    loads = {
        3: [(0.285, 0.97), (0.265, 0.85)], 4: [(0.445, 0.97)], 5: [(0.750, 0.97)],
        6: [(0.565, 0.97)], 7: [(0.090, 0.85)], 8: [(0.605, 0.97)], 9: [(0.675, 0.85)],
        10: [(0.490, 0.97), (0.080, 0.85)], 11: [(0.340, 0.97)], 13: [(0.040, 0.85)],
        14: [(0.215, 0.97), (0.390, 0.85)],
    }
    curtailable = {"L5", "L6", "L8", "L9", "L10", "L14"}
    for bus, parts in loads.items():
        p = sum(s * pf for s, pf in parts)
        q = sum(s * math.sin(math.acos(pf)) for s, pf in parts)
        lid = f"L{bus}"
        net.loads[lid] = Load(lid, str(bus), round(p, 6), round(q, 6),
                              curtailable=lid in curtailable, gamma_max=0.5 if lid in curtailable else 0.0)
    relax_ratings(net)
    return net


def _matpower_rows(text: str, key: str) -> list[list[float]]:
    block = re.search(rf"mpc\.{key}\s*=\s*\[(.*?)\];", text, re.S).group(1)
    rows = []
    for line in block.splitlines():
        line = line.split("%")[0].strip().rstrip(";")
        if line:
            rows.append([float(v) for v in line.split()])
    return rows


def ieee69() -> Network:
    """Baran & Wu 69-bus feeder, 12.66 kV, radial (tie lines not included).

    The 11 largest loads are split into two equal halves (ids ``L<bus>a`` /
    ``L<bus>b``) so that the 48 loaded buses carry 59 load objects; totals are
    unchanged.
    """
    text = (MATPOWER / "case69.m").read_text()
    net = Network(base_mva=10.0, name="ieee69", battery_budget=3)
    bus_rows = _matpower_rows(text, "bus")
    for row in bus_rows:
        bid = str(int(row[0]))
        net.buses[bid] = Bus(bid, f"Bus {bid}", 12.66, "slack" if row[1] == 3 else "pq", 0.90, 1.10)
    net.generators["G1"] = Generator("G1", "1", 0.0, 1.0)
    for row in _matpower_rows(text, "branch"):
        f, t = str(int(row[0])), str(int(row[1]))
        bid = f"{f}-{t}"
        net.branches[bid] = Branch(bid, f, t, r_ohm=row[2], x_ohm=row[3], s_max_mva=5.0,
                                   i_max_ka=round(_i_from_s(5.0, 12.66), 6))
    loaded = [(row[2], str(int(row[0])), row) for row in bus_rows if row[2] or row[3]]
    split = {bus for _, bus, _ in sorted(loaded, key=lambda t: (-t[0], int(t[1])))[:11]}
    for _, bus, row in loaded:
        p, q = row[2] / 1000.0, row[3] / 1000.0
        if bus in split:
            for suffix in "ab":
                net.loads[f"L{bus}{suffix}"] = Load(f"L{bus}{suffix}", bus, p / 2, q / 2)
        else:
            net.loads[f"L{bus}"] = Load(f"L{bus}", bus, p, q)
    for lid in ("L61a", "L61b", "L64a"):
        net.loads[lid].curtailable = True
        net.loads[lid].gamma_max = 0.5
    # sectionalizing switches at lateral heads
    for k, bid in enumerate(("3-28", "3-36", "4-47", "9-53", "53-54"), start=1):
        net.branches[bid].switchable = True
        net.switches[f"SW{k}"] = Switch(f"SW{k}", bid, closed=True)
    relax_ratings(net)
    return net


def main() -> None:
    for build in (ieee30, cigre_mv, ieee69):
        net = build()
        check_network(net)
        sol = solve(net)
        report = analyze(net, sol)
        assert sol.converged and report.empty, (net.name, [v.describe() for v in report.violations])
        path = DATA / f"{net.name}.gridcase.json"
        path.write_text(serialize_case(document_from_network(net)))
        print(f"{net.name}: {len(net.buses)} buses, {len(net.branches)} branches, "
              f"{len(net.loads)} loads, {len(net.controllable_elements())} controllables, "
              f"{sol.iterations} NR iterations, v in [{min(v for v in sol.v_pu.values()):.4f}, "
              f"{max(sol.v_pu.values()):.4f}] -> {path.relative_to(ROOT)}")


if __name__ == "__main__":
    main()
