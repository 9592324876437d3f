"""Training-data export from successful resolution runs."""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass
from pathlib import Path

from ..actions import action_from_dict, action_to_dict, apply_plan
from ..caseio import document_from_obj, network_from_document
from ..model import Network
from ..planner.base import Capabilities, Plan, PlanRequest
from ..planner.llm import build_prompt, plan_to_wire
from ..powerflow import solve
from ..representation import render
from ..violations import ViolationReport, analyze
from ..workflow import ACCEPTED, RESOLVED, ResolutionResult
from .metrics import compute_metrics

FORMATS = ("jsonl", "chat_jsonl")


class WriteError(OSError):
    pass


@dataclass(frozen=True)
class TrainingRecord:
    scenario: str
    initial_case: dict
    initial_report: ViolationReport
    plan: Plan
    explanation: str
    metrics: dict
    final_fingerprint: str

    def to_dict(self) -> dict:
        return {
            "scenario": self.scenario,
            "initial_case": self.initial_case,
            "initial_report": self.initial_report.to_dict(),
            "plan": {"actions": [action_to_dict(a) for a in self.plan.actions],
                     "rationale": self.plan.rationale},
            "explanation": self.explanation,
            "metrics": self.metrics,
            "final_fingerprint": self.final_fingerprint,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TrainingRecord":
        plan = Plan(tuple(action_from_dict(a) for a in d["plan"]["actions"]), d["plan"]["rationale"])
        return cls(d["scenario"], d["initial_case"], ViolationReport.from_dict(d["initial_report"]),
                   plan, d["explanation"], d["metrics"], d["final_fingerprint"])

    def initial_network(self) -> Network:
        return network_from_document(document_from_obj(self.initial_case))

    def replay(self) -> str:
        """Fingerprint of the violations left after re-applying the plan."""
        net = self.initial_network()
        apply_plan(net, self.plan.actions)
        return analyze(net, solve(net)).fingerprint

    def chat(self, token_budget: int = 4000) -> dict:
        """System/user/assistant messages; the assistant turn is the plan as
        tool-call JSON."""
        net = self.initial_network()
        sol = solve(net)
        report = analyze(net, sol)
        ctx = render(net, sol, report, token_budget)
        prompt = build_prompt(PlanRequest(ctx, Capabilities.from_network(net)))
        wire = plan_to_wire(self.plan, existing_batteries=net.batteries)
        return {"messages": [
            {"role": "system", "content": prompt["system"]},
            {"role": "user", "content": prompt["user"]},
            {"role": "assistant", "content": json.dumps(wire)},
        ], "metadata": {"scenario": self.scenario, "final_fingerprint": self.final_fingerprint}}


def training_record(scenario: str, result: ResolutionResult) -> TrainingRecord:
    rationale = " ".join(a.plan.rationale for a in result.attempts
                         if a.outcome == ACCEPTED and a.plan and a.plan.rationale)
    plan = Plan(tuple(a for _, a in result.accepted_actions), rationale, "accepted")
    metrics = compute_metrics(result).to_dict(include_timing=False)
    return TrainingRecord(scenario, result.initial_case, result.initial_report, plan,
                          result.explanation, metrics, result.final_report.fingerprint)


@dataclass(frozen=True)
class ExportSummary:
    written: int
    skipped: int
    path: str


def export_training_data(results, fmt: str, path: str | Path) -> ExportSummary:
    """Write one line per successful run; other runs are skipped with a warning.

    ``results`` is an iterable of (scenario name, ResolutionResult).

    Raises:
        WriteError: the output file could not be written.
    """
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}")
    lines = []
    skipped = 0
    for scenario, result in results:
        if result.status != RESOLVED:
            skipped += 1
            continue
        rec = training_record(scenario, result)
        obj = rec.to_dict() if fmt == "jsonl" else rec.chat()
        lines.append(json.dumps(obj, sort_keys=True))
    if skipped:
        warnings.warn(f"skipped {skipped} unsuccessful run(s)", stacklevel=2)
    try:
        Path(path).write_text("".join(line + "\n" for line in lines), encoding="utf-8")
    except OSError as exc:
        raise WriteError(f"cannot write {path}: {exc}") from None
    return ExportSummary(len(lines), skipped, str(path))


def read_records(path: str | Path) -> list[TrainingRecord]:
    text = Path(path).read_text(encoding="utf-8")
    return [TrainingRecord.from_dict(json.loads(line)) for line in text.splitlines() if line.strip()]
