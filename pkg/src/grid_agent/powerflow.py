"""Newton-Raphson AC power flow and connectivity analysis."""

from __future__ import annotations

import math
from collections import defaultdict, deque
from dataclasses import dataclass, field

import numpy as np

from .model import (
    Network,
    active_branches,
    branch_pu,
    build_admittance,
    current_base_ka,
)


class PowerFlowError(RuntimeError):
    pass


class SingularJacobian(PowerFlowError):
    pass


class NoSlackInIsland(PowerFlowError):
    pass


@dataclass(frozen=True)
class Island:
    buses: tuple[str, ...]
    energized: bool


@dataclass
class BranchFlow:
    p_from_mw: float = 0.0
    q_from_mvar: float = 0.0
    p_to_mw: float = 0.0
    q_to_mvar: float = 0.0
    s_mva: float = 0.0
    i_ka: float = 0.0
    loading_percent: float = 0.0


@dataclass
class SolverOptions:
    tolerance_pu: float = 1e-8
    max_iterations: int = 50
    flat_start: bool = True
    enforce_q_limits: bool = True
    # warm start voltages (bus id -> complex pu), used when flat_start is False
    initial: dict[str, complex] | None = None


@dataclass
class PowerFlowSolution:
    v_pu: dict[str, float]
    theta_rad: dict[str, float]
    branches: dict[str, BranchFlow]
    converged: bool
    iterations: int
    max_mismatch_pu: float
    islands: list[Island]
    network_digest: str
    q_limit_switches: int = 0
    total_iterations: int = 0
    tolerance_pu: float = 1e-8

    @property
    def energized_buses(self) -> set[str]:
        return {b for isl in self.islands if isl.energized for b in isl.buses}

    @property
    def deenergized_buses(self) -> list[str]:
        return [b for isl in self.islands if not isl.energized for b in isl.buses]

    def voltages(self) -> dict[str, complex]:
        return {b: self.v_pu[b] * complex(math.cos(t), math.sin(t)) for b, t in self.theta_rad.items()}

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "total_iterations": self.total_iterations,
            "q_limit_switches": self.q_limit_switches,
            "max_mismatch_pu": self.max_mismatch_pu,
            "buses": {b: {"v_pu": self.v_pu[b], "theta_rad": self.theta_rad[b]} for b in self.v_pu},
            "branches": {k: vars(f) for k, f in self.branches.items()},
            "islands": [{"buses": list(i.buses), "energized": i.energized} for i in self.islands],
        }


def find_islands(net: Network) -> list[Island]:
    """Connected components of in-service buses over conducting branches.

    An island is energized iff it holds the slack bus. Islands are listed in
    network bus order of their first member.
    """
    adj: dict[str, list[str]] = defaultdict(list)
    for br in active_branches(net):
        adj[br.from_bus].append(br.to_bus)
        adj[br.to_bus].append(br.from_bus)
    slack = next((b.id for b in net.buses.values() if b.kind == "slack"), None)
    order = {b: i for i, b in enumerate(net.buses)}
    seen: set[str] = set()
    islands = []
    for bus in net.buses.values():
        if not bus.in_service or bus.id in seen:
            continue
        comp = []
        queue = deque([bus.id])
        seen.add(bus.id)
        while queue:
            u = queue.popleft()
            comp.append(u)
            for v in adj[u]:
                if v not in seen:
                    seen.add(v)
                    queue.append(v)
        comp.sort(key=order.__getitem__)
        islands.append(Island(tuple(comp), slack in comp))
    return islands


def scheduled_injections(net: Network) -> dict[str, complex]:
    """Net specified complex injection per bus in pu (generation - demand)."""
    s: dict[str, complex] = defaultdict(complex)
    base = net.base_mva
    for load in net.loads.values():
        s[load.bus_id] -= complex(load.effective_p_mw, load.q_mvar) / base
    for gen in net.generators.values():
        if gen.in_service:
            s[gen.bus_id] += gen.p_mw / base
    for bat in net.batteries.values():
        if bat.placed:
            s[bat.bus_id] += complex(bat.p_mw, bat.q_mvar) / base
    return s


def power_mismatch(Y: np.ndarray, V: np.ndarray, S_spec: np.ndarray,
                   pv: np.ndarray, pq: np.ndarray) -> np.ndarray:
    """Stacked [dP(pv, pq); dQ(pq)] of calculated minus scheduled injection."""
    mis = V * np.conj(Y @ V) - S_spec
    return np.r_[mis[np.r_[pv, pq]].real, mis[pq].imag]


def mismatch_jacobian(Y: np.ndarray, V: np.ndarray, pv: np.ndarray, pq: np.ndarray) -> np.ndarray:
    """Jacobian of ``power_mismatch`` w.r.t. [angles(pv, pq); magnitudes(pq)]."""
    Ibus = Y @ V
    Vnorm = V / np.abs(V)
    dS_dVa = 1j * np.diag(V) @ np.conj(np.diag(Ibus) - Y @ np.diag(V))
    dS_dVm = np.diag(V) @ np.conj(Y @ np.diag(Vnorm)) + np.conj(np.diag(Ibus)) @ np.diag(Vnorm)
    pvpq = np.r_[pv, pq]
    return np.block([
        [dS_dVa[np.ix_(pvpq, pvpq)].real, dS_dVm[np.ix_(pvpq, pq)].real],
        [dS_dVa[np.ix_(pq, pvpq)].imag, dS_dVm[np.ix_(pq, pq)].imag],
    ])


def newton_raphson(Y, V0, S_spec, pv, pq, tol, max_it):
    """Plain full Newton iteration. Returns (V, converged, iterations, max |F|)."""
    V = V0.astype(complex).copy()
    Va, Vm = np.angle(V), np.abs(V)
    pvpq = np.r_[pv, pq]
    npvpq = len(pvpq)
    F = power_mismatch(Y, V, S_spec, pv, pq)
    norm = float(np.max(np.abs(F))) if F.size else 0.0
    it = 0
    while norm > tol and it < max_it:
        J = mismatch_jacobian(Y, V, pv, pq)
        try:
            dx = -np.linalg.solve(J, F)
        except np.linalg.LinAlgError as exc:
            raise SingularJacobian(str(exc)) from None
        it += 1
        Va[pvpq] += dx[:npvpq]
        Vm[pq] += dx[npvpq:]
        V = Vm * np.exp(1j * Va)
        F = power_mismatch(Y, V, S_spec, pv, pq)
        norm = float(np.max(np.abs(F)))
        if not np.isfinite(norm) or np.any(Vm <= 0):
            return V, False, it, float("inf")
    return V, norm <= tol, it, norm


def branch_flows(net: Network, voltages: dict[str, complex]) -> dict[str, BranchFlow]:
    """Pi-model flows at both ends; zero for branches that do not conduct.

    ``voltages`` maps energized bus ids to complex pu voltages; a branch with
    an end missing from it is treated as de-energized.
    """
    base = net.base_mva
    out = {bid: BranchFlow() for bid in net.branches}
    for br in active_branches(net):
        vf = voltages.get(br.from_bus)
        vt = voltages.get(br.to_bus)
        if vf is None or vt is None:
            continue
        y, b = branch_pu(net, br)
        i_f = (vf - vt) * y + vf * 0.5j * b
        i_t = (vt - vf) * y + vt * 0.5j * b
        s_f = vf * i_f.conjugate()
        s_t = vt * i_t.conjugate()
        s_mva = abs(s_f) * base
        i_ka = abs(i_f) * current_base_ka(net.buses[br.from_bus].nominal_kv, base)
        loading = 100.0 * max(s_mva / br.s_max_mva, i_ka / br.i_max_ka)
        out[br.id] = BranchFlow(
            p_from_mw=float(s_f.real * base),
            q_from_mvar=float(s_f.imag * base),
            p_to_mw=float(s_t.real * base),
            q_to_mvar=float(s_t.imag * base),
            s_mva=float(s_mva),
            i_ka=float(i_ka),
            loading_percent=float(loading),
        )
    return out


def solve(net: Network, opts: SolverOptions | None = None) -> PowerFlowSolution:
    """Solve the energized island; other islands are reported de-energized.

    PV buses are held at their generator set point until a reactive limit is
    hit, then switched to PQ at that limit and the system re-solved (warm),
    at most once per PV bus.
    """
    opts = opts or SolverOptions()
    islands = find_islands(net)
    live = next((isl for isl in islands if isl.energized), None)
    if live is None:
        raise NoSlackInIsland("slack bus is out of service")
    adm = build_admittance(net, live.buses)
    ids = adm.bus_ids
    idx = adm.index
    n = len(ids)
    base = net.base_mva

    sched = scheduled_injections(net)
    S_spec = np.array([sched.get(b, 0j) for b in ids], dtype=complex)

    gens_at: dict[str, list] = defaultdict(list)
    for g in net.generators.values():
        if g.in_service:
            gens_at[g.bus_id].append(g)
    slack = net.slack_bus
    ref = idx[slack]
    kinds = {}
    vset = np.ones(n)
    for b in ids:
        bus = net.buses[b]
        if b == slack:
            kinds[b] = "slack"
        elif bus.kind == "pv" and gens_at[b]:
            kinds[b] = "pv"
        else:
            kinds[b] = "pq"
        if gens_at[b] and kinds[b] != "pq":
            vset[idx[b]] = gens_at[b][0].v_set_pu

    if opts.flat_start or not opts.initial:
        V = vset.astype(complex)
    else:
        V = np.array([opts.initial.get(b, vset[i]) for i, b in enumerate(ids)], dtype=complex)
        for b in ids:
            if kinds[b] != "pq":
                V[idx[b]] = vset[idx[b]] * V[idx[b]] / abs(V[idx[b]])
        V[ref] = vset[ref]

    def split():
        pv = np.array([idx[b] for b in ids if kinds[b] == "pv"], dtype=int)
        pq = np.array([idx[b] for b in ids if kinds[b] == "pq"], dtype=int)
        return pv, pq

    pv, pq = split()
    n_pv = len(pv)
    switches = 0
    total = 0
    while True:
        V, converged, it, norm = newton_raphson(Y=adm.Y, V0=V, S_spec=S_spec, pv=pv, pq=pq,
                                                tol=opts.tolerance_pu, max_it=opts.max_iterations)
        total += it
        if not converged or not opts.enforce_q_limits or switches >= n_pv:
            break
        S_calc = V * np.conj(adm.Y @ V)
        hit = []
        for b in ids:
            if kinds[b] != "pv":
                continue
            i = idx[b]
            q_gen = (S_calc[i].imag - S_spec[i].imag) * base
            q_max = sum(g.q_max_mvar for g in gens_at[b])
            q_min = sum(g.q_min_mvar for g in gens_at[b])
            if q_gen > q_max + 1e-9:
                hit.append((b, q_max, q_gen - q_max))
            elif q_gen < q_min - 1e-9:
                hit.append((b, q_min, q_min - q_gen))
        if not hit:
            break
        for b, q_lim, _ in hit:
            kinds[b] = "pq"
            S_spec[idx[b]] += 1j * q_lim / base
            switches += 1
        pv, pq = split()

    v_pu = {b: 0.0 for b in net.buses}
    theta = {b: 0.0 for b in net.buses}
    for b in ids:
        v_pu[b] = float(abs(V[idx[b]]))
        theta[b] = float(np.angle(V[idx[b]]) - np.angle(V[ref]))
    theta[slack] = 0.0
    volts = {b: V[idx[b]] for b in ids}
    return PowerFlowSolution(
        v_pu=v_pu,
        theta_rad=theta,
        branches=branch_flows(net, volts),
        converged=bool(converged),
        iterations=int(it),
        max_mismatch_pu=float(norm),
        islands=islands,
        network_digest=net.digest(),
        q_limit_switches=switches,
        total_iterations=total,
        tolerance_pu=opts.tolerance_pu,
    )
