"""Control actions: validation, application and exact reversal."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Union

from .model import Battery, Network

# battery capability used when a planner does not size the unit
DEFAULT_BATTERY_S_MVA = 5.0
DEFAULT_BATTERY_P_MW = 5.0
DEFAULT_BATTERY_Q_MVAR = 5.0

_EPS = 1e-12


@dataclass(frozen=True)
class SetSwitch:
    switch_id: str
    closed: bool

    @property
    def tool(self) -> str:
        return "update_switch_status"


@dataclass(frozen=True)
class CurtailLoad:
    load_id: str
    gamma: float

    @property
    def tool(self) -> str:
        return "curtail_load"


@dataclass(frozen=True)
class AddBattery:
    bus_id: str
    s_max_mva: float = DEFAULT_BATTERY_S_MVA
    p_max_mw: float = DEFAULT_BATTERY_P_MW
    q_max_mvar: float = DEFAULT_BATTERY_Q_MVAR

    @property
    def tool(self) -> str:
        return "add_battery"


@dataclass(frozen=True)
class DispatchBattery:
    battery_id: str
    p_mw: float
    q_mvar: float

    @property
    def tool(self) -> str:
        return "dispatch_battery"


Action = Union[SetSwitch, CurtailLoad, AddBattery, DispatchBattery]
ACTION_TYPES = {cls.__name__: cls for cls in (SetSwitch, CurtailLoad, AddBattery, DispatchBattery)}


def action_to_dict(a: Action) -> dict:
    return {"type": type(a).__name__, **asdict(a)}


def action_from_dict(d: dict) -> Action:
    d = dict(d)
    return ACTION_TYPES[d.pop("type")](**d)


@dataclass(frozen=True)
class Diagnostic:
    code: str
    message: str

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


class InvalidAction(ValueError):
    def __init__(self, diagnostic: Diagnostic):
        super().__init__(str(diagnostic))
        self.diagnostic = diagnostic


class PlanAborted(RuntimeError):
    """Raised by apply_plan; actions before ``index`` remain applied."""

    def __init__(self, index: int, diagnostic: Diagnostic, undo_stack: list["UndoRecord"]):
        super().__init__(f"plan aborted at action {index}: {diagnostic}")
        self.index = index
        self.diagnostic = diagnostic
        self.undo_stack = undo_stack


@dataclass(frozen=True)
class UndoRecord:
    action: Action
    prior: object  # switch state, gamma, battery id, or (p, q) dispatch


def next_battery_id(net: Network, taken: set[str] | None = None) -> str:
    used = set(net.batteries) | (taken or set())
    k = 1
    while f"BAT{k}" in used:
        k += 1
    return f"BAT{k}"


def _finite(*xs) -> bool:
    return all(isinstance(x, (int, float)) and not isinstance(x, bool) and math.isfinite(x) for x in xs)


def validate_action(net: Network, a: Action) -> Diagnostic | None:
    """Check an action against the network's constraints. Never mutates."""
    if isinstance(a, SetSwitch):
        if a.switch_id not in net.switches:
            return Diagnostic("UnknownElement", f"no switch {a.switch_id!r}")
        if not isinstance(a.closed, bool):
            return Diagnostic("InvalidValue", "closed must be a boolean")
        return None
    if isinstance(a, CurtailLoad):
        load = net.loads.get(a.load_id)
        if load is None:
            return Diagnostic("UnknownElement", f"no load {a.load_id!r}")
        if not load.curtailable:
            return Diagnostic("NotCurtailable", f"load {a.load_id!r} is not curtailable")
        if not _finite(a.gamma) or a.gamma < 0 or a.gamma > 1:
            return Diagnostic("InvalidValue", f"gamma {a.gamma!r} outside [0, 1]")
        if a.gamma > load.gamma_max + _EPS:
            return Diagnostic("CurtailmentExceeded",
                              f"gamma {a.gamma} exceeds gamma_max {load.gamma_max} of {a.load_id!r}")
        return None
    if isinstance(a, AddBattery):
        if a.bus_id not in net.buses:
            return Diagnostic("UnknownElement", f"no bus {a.bus_id!r}")
        if not _finite(a.s_max_mva, a.p_max_mw, a.q_max_mvar) or min(a.s_max_mva, a.p_max_mw, a.q_max_mvar) <= 0:
            return Diagnostic("InvalidValue", "battery ratings must be finite and positive")
        if net.placed_batteries() >= net.battery_budget:
            return Diagnostic("BudgetExceeded",
                              f"{net.placed_batteries()} of {net.battery_budget} batteries already placed")
        return None
    if isinstance(a, DispatchBattery):
        bat = net.batteries.get(a.battery_id)
        if bat is None:
            return Diagnostic("UnknownElement", f"no battery {a.battery_id!r}")
        if not bat.placed:
            return Diagnostic("NotPlaced", f"battery {a.battery_id!r} is not placed")
        if not _finite(a.p_mw, a.q_mvar):
            return Diagnostic("InvalidValue", "dispatch must be finite")
        s2 = a.p_mw ** 2 + a.q_mvar ** 2
        if s2 > bat.s_max_mva ** 2 * (1 + _EPS):
            return Diagnostic("ApparentPowerExceeded",
                              f"p^2 + q^2 = {s2:g} > s_max^2 = {bat.s_max_mva ** 2:g}")
        if abs(a.p_mw) > bat.p_max_mw + _EPS:
            return Diagnostic("ActivePowerExceeded", f"|p| {abs(a.p_mw):g} > p_max {bat.p_max_mw:g}")
        if abs(a.q_mvar) > bat.q_max_mvar + _EPS:
            return Diagnostic("ReactivePowerExceeded", f"|q| {abs(a.q_mvar):g} > q_max {bat.q_max_mvar:g}")
        return None
    return Diagnostic("UnknownAction", f"unsupported action {a!r}")


def apply_action(net: Network, a: Action) -> UndoRecord:
    diag = validate_action(net, a)
    if diag is not None:
        raise InvalidAction(diag)
    if isinstance(a, SetSwitch):
        sw = net.switches[a.switch_id]
        prior = sw.closed
        sw.closed = a.closed
    elif isinstance(a, CurtailLoad):
        load = net.loads[a.load_id]
        prior = load.gamma
        load.gamma = float(a.gamma)
    elif isinstance(a, AddBattery):
        bid = next_battery_id(net)
        net.batteries[bid] = Battery(id=bid, bus_id=a.bus_id, s_max_mva=float(a.s_max_mva),
                                     p_max_mw=float(a.p_max_mw), q_max_mvar=float(a.q_max_mvar))
        prior = bid
    else:
        bat = net.batteries[a.battery_id]
        prior = (bat.p_mw, bat.q_mvar)
        bat.p_mw, bat.q_mvar = float(a.p_mw), float(a.q_mvar)
    return UndoRecord(a, prior)


def undo_action(net: Network, rec: UndoRecord) -> None:
    a = rec.action
    if isinstance(a, SetSwitch):
        net.switches[a.switch_id].closed = rec.prior
    elif isinstance(a, CurtailLoad):
        net.loads[a.load_id].gamma = rec.prior
    elif isinstance(a, AddBattery):
        del net.batteries[rec.prior]
    else:
        bat = net.batteries[a.battery_id]
        bat.p_mw, bat.q_mvar = rec.prior


def apply_plan(net: Network, actions) -> list[UndoRecord]:
    """Apply actions in order; the returned stack is in reverse-application order.

    Raises:
        PlanAborted: at the first invalid action. Earlier actions stay applied
            and their undo records ride on the exception.
    """
    stack: list[UndoRecord] = []
    for i, a in enumerate(actions):
        diag = validate_action(net, a)
        if diag is not None:
            raise PlanAborted(i, diag, stack)
        stack.insert(0, apply_action(net, a))
    return stack


def undo_all(net: Network, stack: list[UndoRecord]) -> None:
    for rec in stack:
        undo_action(net, rec)


def action_buses(net: Network, a: Action) -> tuple[str, ...]:
    """Buses an action touches; a switch touches both ends of its branch."""
    if isinstance(a, SetSwitch):
        br = net.branches[net.switches[a.switch_id].branch_id]
        return (br.from_bus, br.to_bus)
    if isinstance(a, CurtailLoad):
        return (net.loads[a.load_id].bus_id,)
    if isinstance(a, AddBattery):
        return (a.bus_id,)
    return (net.batteries[a.battery_id].bus_id,)
