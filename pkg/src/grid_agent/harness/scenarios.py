"""Violation scenarios: seeded perturbation search and named presets."""

from __future__ import annotations

import itertools
import json
import random
from dataclasses import dataclass, field

from ..caseio import BUILTIN_CASES, apply_perturbations, builtin_network, load_case, network_from_document
from ..model import Branch, Bus, Generator, Load, Network, Switch
from ..powerflow import PowerFlowError, find_islands, solve
from ..violations import KINDS, AnalysisError, ViolationReport, analyze


class TargetUnreachable(RuntimeError):
    pass


def tie_feeder() -> Network:
    """Two radial feeders joined by an open tie switch.

    Feeder A (buses 2-4) sags below 0.95 pu at buses 3 and 4; closing tie
    T1 (4-6) back-feeds bus 4 from feeder B and clears both. S1 sectionalizes
    feeder B.
    """
    net = Network(base_mva=10.0, name="tie_feeder")
    for i in range(1, 7):
        net.buses[str(i)] = Bus(str(i), f"Bus {i}", 11.0, "slack" if i == 1 else "pq")
    net.generators["G1"] = Generator("G1", "1", 0.0, 1.0)
    for bid in ("1-2", "2-3", "3-4", "1-5", "5-6", "4-6"):
        f, t = bid.split("-")
        net.branches[bid] = Branch(bid, f, t, 1.0, 0.8, s_max_mva=8.0, i_max_ka=0.42,
                                   switchable=bid in ("4-6", "5-6"))
    net.switches["T1"] = Switch("T1", "4-6", closed=False)
    net.switches["S1"] = Switch("S1", "5-6", closed=True)
    net.loads["L2"] = Load("L2", "2", 0.5, 0.1)
    net.loads["L3"] = Load("L3", "3", 1.2, 0.3)
    net.loads["L4"] = Load("L4", "4", 1.2, 0.3)
    net.loads["L6"] = Load("L6", "6", 0.3, 0.1)
    return net


CRAFTED = {"tie_feeder": tie_feeder}


def base_network(name: str) -> Network:
    """A crafted network, a built-in case, or a case file path."""
    if name in CRAFTED:
        return CRAFTED[name]()
    if name in BUILTIN_CASES:
        return builtin_network(name)
    return network_from_document(load_case(name))


@dataclass(frozen=True)
class ScenarioTarget:
    """At least ``count`` violations in total and ``min_per_kind`` of each listed kind."""

    count: int
    min_per_kind: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        if self.count < 1:
            raise ValueError("target count must be >= 1")
        bad = set(self.min_per_kind) - set(KINDS)
        if bad:
            raise ValueError(f"unknown violation kinds {sorted(bad)}")

    @classmethod
    def of(cls, count: int, kinds=()) -> "ScenarioTarget":
        return cls(count, {k: 1 for k in kinds})

    def met_by(self, report: ViolationReport) -> bool:
        counts = report.counts
        return len(report) >= self.count and all(counts[k] >= n for k, n in self.min_per_kind.items())


@dataclass(frozen=True)
class SearchSpace:
    max_scale: float = 3.0
    scale_step: float = 0.1
    min_derate: float = 0.5
    derate_step: float = 0.1
    max_derates: int = 8
    max_openings: int = 2


@dataclass(frozen=True)
class Scenario:
    name: str
    base: str
    perturbations: tuple[dict, ...] = ()
    expected_violation_profile: dict | None = None
    seed: int = 0

    def build(self) -> Network:
        net = base_network(self.base)
        apply_perturbations(net, self.perturbations)
        net.name = self.name
        return net

    def to_dict(self) -> dict:
        return {"name": self.name, "base": self.base, "seed": self.seed,
                "perturbations": [dict(p) for p in self.perturbations],
                "expected_violation_profile": self.expected_violation_profile}

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        return cls(d["name"], d["base"], tuple(d.get("perturbations", ())),
                   d.get("expected_violation_profile"), d.get("seed", 0))


def profile(report: ViolationReport) -> dict:
    return {"total": len(report), "counts": report.counts}


def _evaluate(base: Network, perturbations) -> ViolationReport | None:
    net = base.copy()
    apply_perturbations(net, perturbations)
    try:
        return analyze(net, solve(net))
    except (PowerFlowError, AnalysisError):
        return None


def _grid(start: float, stop: float, step: float) -> list[float]:
    n = int(round((stop - start) / step))
    return [round(start + k * step, 10) for k in range(n + 1)]


def generate_scenario(base: Network, target: ScenarioTarget, seed: int = 0,
                      space: SearchSpace | None = None, name: str | None = None,
                      base_name: str | None = None) -> Scenario:
    """Seeded search for perturbations that produce the target violations.

    Disconnection targets are met by opening branches (switches first);
    other targets by scaling all loads in 0.1 steps, topped up with 0.1-step
    branch derates when thermal violations are still missing.

    Raises:
        TargetUnreachable: the search space holds no qualifying perturbation.
    """
    space = space or SearchSpace()
    rng = random.Random(seed)
    base_name = base_name or base.name
    name = name or f"{base_name}-target{target.count}-seed{seed}"
    if target.min_per_kind.get("disconnected"):
        perts = _search_openings(base, target, rng, space)
    else:
        perts = _search_loading(base, target, rng, space)
    if perts is None:
        raise TargetUnreachable(f"no perturbation in the search space yields {target}")
    report = _evaluate(base, perts)
    return Scenario(name, base_name, tuple(perts), profile(report), seed)


def _opening(net: Network, branch_id: str) -> dict:
    sw = net.switch_for_branch(branch_id)
    if sw is not None:
        return {"op": "force_switch", "id": sw.id, "closed": False}
    return {"op": "open_branch", "id": branch_id}


def _disconnected_count(base: Network, perturbations) -> int:
    net = base.copy()
    apply_perturbations(net, perturbations)
    return sum(len(isl.buses) for isl in find_islands(net) if not isl.energized)


def _search_openings(base, target, rng, space):
    ids = [b for b, br in base.branches.items() if br.in_service]
    rng.shuffle(ids)
    # switchable branches first so faults are modelled with switch operations where possible
    ids.sort(key=lambda b: base.switch_for_branch(b) is None)
    need = target.min_per_kind["disconnected"]
    best = None
    for k in range(1, space.max_openings + 1):
        for combo in itertools.combinations(ids, k):
            perts = [_opening(base, b) for b in combo]
            n_off = _disconnected_count(base, perts)
            if n_off < need or (best is not None and (n_off, k) >= best[0][::2]):
                continue
            rep = _evaluate(base, perts)
            if rep is None or not target.met_by(rep):
                continue
            best = ((n_off, len(rep), k), perts)
            if n_off == need:
                return perts
    return None if best is None else best[1]


def _search_loading(base, target, rng, space):
    for scale in _grid(1.0, space.max_scale, space.scale_step):
        perts = [] if scale == 1.0 else [{"op": "scale_load", "factor": scale}]
        rep = _evaluate(base, perts)
        if rep is None:
            return None
        if target.met_by(rep):
            return perts
        found = _top_up_thermal(base, perts, target, rng, space)
        if found is not None:
            return found
    return None


def _top_up_thermal(base, perts, target, rng, space):
    net = base.copy()
    apply_perturbations(net, perts)
    try:
        sol = solve(net)
    except PowerFlowError:
        return None
    loaded = [(f.loading_percent, b) for b, f in sol.branches.items() if f.loading_percent > 0]
    rng.shuffle(loaded)
    loaded.sort(key=lambda t: -round(t[0], 6))
    perts = list(perts)
    derated = 0
    factors = _grid(space.min_derate, 1.0 - space.derate_step, space.derate_step)[::-1]
    for loading, bid in loaded:
        if derated >= space.max_derates:
            break
        if loading > 100.0:
            continue
        fit = next((f for f in factors if loading / f > 100.0 * 1.02), None)
        if fit is None:
            continue
        perts.append({"op": "derate_branch", "id": bid, "factor": fit})
        derated += 1
        rep = _evaluate(base, perts)
        if rep is not None and target.met_by(rep):
            return perts
    return None


PRESET_TARGETS = {
    "case30_light": ("ieee30", ScenarioTarget(5, {"undervoltage": 2, "thermal": 3})),
    "case30_medium": ("ieee30", ScenarioTarget(1, {"thermal": 1})),
    "cigre_mv_severe": ("cigre_mv", ScenarioTarget(14, {"undervoltage": 1, "thermal": 1})),
    "cigre_mv_disconnected": ("cigre_mv", ScenarioTarget(5, {"disconnected": 5})),
    "ieee69_large_loads": ("ieee69", ScenarioTarget(18, {"undervoltage": 1})),
    "ieee69_medium_loads": ("ieee69", ScenarioTarget(29, {"undervoltage": 1, "thermal": 1})),
    "ieee69_disconnected": ("ieee69", ScenarioTarget(13, {"disconnected": 13})),
}


def preset(name: str, seed: int = 0) -> Scenario:
    """One of the named benchmark scenarios, generated deterministically."""
    if name == "tie_feeder":
        net = tie_feeder()
        return Scenario("tie_feeder", "tie_feeder", (), profile(analyze(net, solve(net))), seed)
    if name not in PRESET_TARGETS:
        raise KeyError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    base, target = PRESET_TARGETS[name]
    return generate_scenario(builtin_network(base), target, seed, name=name, base_name=base)


PRESETS = ("tie_feeder", *PRESET_TARGETS)


def load_suite(text: str) -> list[Scenario]:
    """A suite file: a JSON list of scenarios, or {"scenarios": [...]};
    a bare string entry names a preset."""
    obj = json.loads(text)
    items = obj["scenarios"] if isinstance(obj, dict) else obj
    return [preset(x) if isinstance(x, str) else Scenario.from_dict(x) for x in items]


def dump_suite(scenarios) -> str:
    return json.dumps({"scenarios": [s.to_dict() for s in scenarios]}, indent=1) + "\n"


__all__ = [
    "BUILTIN_CASES", "PRESETS", "Scenario", "ScenarioTarget", "SearchSpace", "TargetUnreachable",
    "base_network", "dump_suite", "generate_scenario", "load_suite", "preset", "tie_feeder",
]
