"""Grid data model: buses, branches, switches, loads, generators, batteries.

Impedances are stored in physical units (ohm, siemens) and converted to
per-unit only when the admittance matrix is assembled, using the from-bus
nominal voltage as the impedance base.
"""

from __future__ import annotations

import copy
import hashlib
import json
import math
from dataclasses import asdict, dataclass, field, fields
from typing import Any, Iterable

import numpy as np

BUS_KINDS = ("slack", "pv", "pq")


class GridModelError(ValueError):
    """Base class for structural problems in a network description."""


class DanglingReference(GridModelError):
    pass


class MultipleSlack(GridModelError):
    pass


class NoSlack(GridModelError):
    pass


class UnknownBranch(GridModelError, KeyError):
    pass


class ZeroImpedanceBranch(GridModelError):
    pass


@dataclass
class Bus:
    id: str
    name: str = ""
    nominal_kv: float = 1.0
    kind: str = "pq"
    v_min_pu: float = 0.95
    v_max_pu: float = 1.05
    in_service: bool = True


@dataclass
class Branch:
    id: str
    from_bus: str
    to_bus: str
    r_ohm: float
    x_ohm: float
    b_total_shunt_siemens: float = 0.0
    s_max_mva: float = 1e4
    i_max_ka: float = 1e3
    in_service: bool = True
    switchable: bool = False


@dataclass
class Switch:
    id: str
    branch_id: str
    closed: bool = True


@dataclass
class Load:
    id: str
    bus_id: str
    p_mw: float
    q_mvar: float = 0.0
    curtailable: bool = False
    gamma: float = 0.0
    gamma_max: float = 0.0

    @property
    def effective_p_mw(self) -> float:
        return self.p_mw * (1.0 - self.gamma)


@dataclass
class Generator:
    id: str
    bus_id: str
    p_mw: float = 0.0
    v_set_pu: float = 1.0
    q_min_mvar: float = -1e4
    q_max_mvar: float = 1e4
    in_service: bool = True


@dataclass
class Battery:
    id: str
    bus_id: str
    s_max_mva: float
    p_max_mw: float
    q_max_mvar: float
    placed: bool = True
    p_mw: float = 0.0
    q_mvar: float = 0.0


_COLLECTIONS = {
    "buses": Bus,
    "branches": Branch,
    "switches": Switch,
    "loads": Load,
    "generators": Generator,
    "batteries": Battery,
}


@dataclass
class Network:
    """A grid description keyed by element id.

    Collections are insertion-ordered dicts; that order is the canonical
    bus ordering used by the admittance matrix and all renderers.
    """

    base_mva: float = 100.0
    buses: dict[str, Bus] = field(default_factory=dict)
    branches: dict[str, Branch] = field(default_factory=dict)
    switches: dict[str, Switch] = field(default_factory=dict)
    loads: dict[str, Load] = field(default_factory=dict)
    generators: dict[str, Generator] = field(default_factory=dict)
    batteries: dict[str, Battery] = field(default_factory=dict)
    battery_budget: int = 0
    name: str = ""

    def copy(self) -> "Network":
        return copy.deepcopy(self)

    @property
    def slack_bus(self) -> str:
        slacks = [b.id for b in self.buses.values() if b.kind == "slack"]
        if not slacks:
            raise NoSlack("network has no slack bus")
        if len(slacks) > 1:
            raise MultipleSlack(f"network has {len(slacks)} slack buses: {slacks}")
        return slacks[0]

    def switch_for_branch(self, branch_id: str) -> Switch | None:
        for sw in self.switches.values():
            if sw.branch_id == branch_id:
                return sw
        return None

    def placed_batteries(self) -> int:
        return sum(1 for b in self.batteries.values() if b.placed)

    def controllable_elements(self) -> list[str]:
        """Switches plus curtailable loads, as prefixed element keys."""
        keys = [f"switch:{s}" for s in self.switches]
        keys += [f"load:{l.id}" for l in self.loads.values() if l.curtailable]
        return keys

    def to_payload(self) -> dict[str, Any]:
        """Plain-JSON mirror of every field, in canonical order."""
        out: dict[str, Any] = {"name": self.name, "base_mva": self.base_mva}
        for key in _COLLECTIONS:
            out[key] = [asdict(item) for item in getattr(self, key).values()]
        out["battery_budget"] = self.battery_budget
        return out

    def digest(self) -> str:
        blob = json.dumps(self.to_payload(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


def build_network(payload: dict[str, Any]) -> Network:
    """Build and cross-check a Network from a validated payload dict.

    Raises:
        DanglingReference: an element refers to an unknown bus/branch.
        MultipleSlack, NoSlack: the network does not have exactly one slack.
    """
    net = Network(
        base_mva=float(payload["base_mva"]),
        battery_budget=int(payload.get("battery_budget", 0)),
        name=str(payload.get("name", "")),
    )
    for key, cls in _COLLECTIONS.items():
        names = {f.name for f in fields(cls)}
        target = getattr(net, key)
        for item in payload.get(key, []):
            obj = cls(**{k: v for k, v in item.items() if k in names})
            target[obj.id] = obj
    check_network(net)
    return net


def check_network(net: Network) -> None:
    """Raise if any invariant of the network is broken."""
    buses = net.buses
    net.slack_bus  # raises NoSlack / MultipleSlack
    for br in net.branches.values():
        for end in (br.from_bus, br.to_bus):
            if end not in buses:
                raise DanglingReference(f"branch {br.id!r} refers to unknown bus {end!r}")
        if br.from_bus == br.to_bus:
            raise GridModelError(f"branch {br.id!r} is a self-loop")
        if br.r_ohm == 0 and br.x_ohm == 0:
            raise ZeroImpedanceBranch(f"branch {br.id!r} has zero impedance")
    seen: set[str] = set()
    for sw in net.switches.values():
        if sw.branch_id not in net.branches:
            raise DanglingReference(f"switch {sw.id!r} refers to unknown branch {sw.branch_id!r}")
        if not net.branches[sw.branch_id].switchable:
            raise GridModelError(f"switch {sw.id!r} sits on non-switchable branch {sw.branch_id!r}")
        if sw.branch_id in seen:
            raise GridModelError(f"branch {sw.branch_id!r} has more than one switch")
        seen.add(sw.branch_id)
    for coll in (net.loads, net.generators, net.batteries):
        for item in coll.values():
            if item.bus_id not in buses:
                raise DanglingReference(f"{item.id!r} refers to unknown bus {item.bus_id!r}")
    for gen in net.generators.values():
        if buses[gen.bus_id].kind not in ("pv", "slack"):
            raise GridModelError(f"generator {gen.id!r} sits on a pq bus")
    if net.placed_batteries() > net.battery_budget:
        raise GridModelError("placed batteries exceed the battery budget")


def effective_branch_state(net: Network, branch_id: str) -> bool:
    """True when the branch conducts: in service and not switched open."""
    try:
        br = net.branches[branch_id]
    except KeyError:
        raise UnknownBranch(branch_id) from None
    if not br.in_service:
        return False
    sw = net.switch_for_branch(branch_id)
    return sw is None or sw.closed


def active_branches(net: Network) -> list[Branch]:
    closed = {s.branch_id: s.closed for s in net.switches.values()}
    out = []
    for br in net.branches.values():
        if not br.in_service or not closed.get(br.id, True):
            continue
        if not (net.buses[br.from_bus].in_service and net.buses[br.to_bus].in_service):
            continue
        out.append(br)
    return out


# per-unit conversion ------------------------------------------------------

def impedance_base(kv: float, base_mva: float) -> float:
    return kv * kv / base_mva


def ohm_to_pu(z_ohm: float | complex, kv: float, base_mva: float):
    return z_ohm / impedance_base(kv, base_mva)


def pu_to_ohm(z_pu: float | complex, kv: float, base_mva: float):
    return z_pu * impedance_base(kv, base_mva)


def current_base_ka(kv: float, base_mva: float) -> float:
    return base_mva / (math.sqrt(3.0) * kv)


def branch_pu(net: Network, br: Branch) -> tuple[complex, float]:
    """Series admittance and total shunt susceptance of a branch, in pu."""
    kv = net.buses[br.from_bus].nominal_kv
    z = ohm_to_pu(complex(br.r_ohm, br.x_ohm), kv, net.base_mva)
    if z == 0:
        raise ZeroImpedanceBranch(f"branch {br.id!r} has zero impedance")
    b = br.b_total_shunt_siemens * impedance_base(kv, net.base_mva)
    return 1.0 / z, b


@dataclass
class AdmittanceMatrix:
    """Dense bus admittance matrix over one set of buses."""

    Y: np.ndarray
    bus_ids: list[str]

    @property
    def order(self) -> int:
        return len(self.bus_ids)

    @property
    def index(self) -> dict[str, int]:
        return {b: i for i, b in enumerate(self.bus_ids)}

    @property
    def G(self) -> np.ndarray:
        return self.Y.real

    @property
    def B(self) -> np.ndarray:
        return self.Y.imag


def build_admittance(net: Network, island: Iterable[str]) -> AdmittanceMatrix:
    """Assemble Y from the pi-model of every conducting branch inside ``island``.

    Bus order follows the network's bus order, restricted to the island.
    """
    members = set(island)
    if not members:
        raise ValueError("island is empty")
    unknown = members - set(net.buses)
    if unknown:
        raise DanglingReference(f"unknown buses in island: {sorted(unknown)}")
    ids = [b for b in net.buses if b in members]
    idx = {b: i for i, b in enumerate(ids)}
    Y = np.zeros((len(ids), len(ids)), dtype=complex)
    for br in active_branches(net):
        if br.from_bus not in idx or br.to_bus not in idx:
            continue
        y, b = branch_pu(net, br)
        f, t = idx[br.from_bus], idx[br.to_bus]
        Y[f, f] += y + 0.5j * b
        Y[t, t] += y + 0.5j * b
        Y[f, t] -= y
        Y[t, f] -= y
    return AdmittanceMatrix(Y=Y, bus_ids=ids)
