"""Violation detection and before/after comparison."""

from __future__ import annotations

import hashlib
from collections import Counter
from dataclasses import dataclass, field

from .model import Network
from .powerflow import PowerFlowSolution

KINDS = ("undervoltage", "overvoltage", "thermal", "disconnected")


class AnalysisError(RuntimeError):
    pass


class StaleSolution(AnalysisError):
    pass


class DivergedAnalysis(AnalysisError):
    pass


@dataclass(frozen=True)
class Violation:
    """One limit breach.

    ``observed``/``limit`` are pu voltage for voltage kinds, loading as a
    fraction of rating for thermal, and None for disconnected buses.
    """

    kind: str
    element: str
    observed: float | None
    limit: float | None
    severity: float

    @property
    def key(self) -> tuple[str, str]:
        return (self.kind, self.element)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "element": self.element, "observed": self.observed,
                "limit": self.limit, "severity": self.severity}

    @classmethod
    def from_dict(cls, d: dict) -> "Violation":
        return cls(d["kind"], str(d["element"]), d["observed"], d["limit"], d["severity"])

    def describe(self) -> str:
        if self.kind == "disconnected":
            return f"{self.kind} bus {self.element}"
        noun = "branch" if self.kind == "thermal" else "bus"
        return (f"{self.kind} {noun} {self.element}: observed {self.observed:.4f}, "
                f"limit {self.limit:.4f}")


def fingerprint(keys) -> str:
    blob = "\n".join(f"{k}|{e}" for k, e in sorted(keys))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


@dataclass
class ViolationReport:
    violations: list[Violation] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.violations)

    @property
    def empty(self) -> bool:
        return not self.violations

    @property
    def counts(self) -> dict[str, int]:
        c = Counter(v.kind for v in self.violations)
        return {k: c.get(k, 0) for k in KINDS}

    @property
    def total_severity(self) -> float:
        return float(sum(v.severity for v in self.violations))

    @property
    def keys(self) -> set[tuple[str, str]]:
        return {v.key for v in self.violations}

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.keys)

    def rank(self) -> tuple[int, float]:
        return (len(self.violations), self.total_severity)

    def to_dict(self) -> dict:
        return {
            "violations": [v.to_dict() for v in self.violations],
            "counts": self.counts,
            "total_severity": self.total_severity,
            "fingerprint": self.fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ViolationReport":
        return cls([Violation.from_dict(v) for v in d["violations"]])


def analyze(net: Network, sol: PowerFlowSolution) -> ViolationReport:
    """Scan every bus and branch against its limits.

    Raises:
        StaleSolution: the network changed after ``sol`` was computed.
        DivergedAnalysis: the power flow did not converge.
    """
    if sol.network_digest != net.digest():
        raise StaleSolution("network was modified after the power flow was solved")
    if not sol.converged:
        raise DivergedAnalysis(
            f"power flow did not converge (mismatch {sol.max_mismatch_pu:.3g} pu)")
    out: list[Violation] = []
    live = sol.energized_buses
    for bus in net.buses.values():
        if not bus.in_service:
            continue
        if bus.id not in live:
            out.append(Violation("disconnected", bus.id, None, None, 1.0))
            continue
        v = sol.v_pu[bus.id]
        if v < bus.v_min_pu:
            out.append(Violation("undervoltage", bus.id, v, bus.v_min_pu, bus.v_min_pu - v))
        elif v > bus.v_max_pu:
            out.append(Violation("overvoltage", bus.id, v, bus.v_max_pu, v - bus.v_max_pu))
    for bid, flow in sol.branches.items():
        if flow.loading_percent > 100.0:
            frac = flow.loading_percent / 100.0
            out.append(Violation("thermal", bid, frac, 1.0, frac - 1.0))
    return ViolationReport(out)


@dataclass
class Comparison:
    resolved: list[tuple[str, str]]
    persisting: list[tuple[str, str]]
    introduced: list[tuple[str, str]]
    improved: bool


def is_improvement(before: ViolationReport, after: ViolationReport) -> bool:
    """Lexicographic (count, total severity) decrease."""
    if len(after) != len(before):
        return len(after) < len(before)
    return after.total_severity < before.total_severity - 1e-9


def compare(before: ViolationReport, after: ViolationReport) -> Comparison:
    b, a = before.keys, after.keys
    return Comparison(
        resolved=sorted(b - a),
        persisting=sorted(b & a),
        introduced=sorted(a - b),
        improved=is_improvement(before, after),
    )
