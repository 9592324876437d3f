"""Plan / execute / validate loop on a sandboxed copy with exact rollback."""

from __future__ import annotations

import json
import time
from collections import Counter
from dataclasses import dataclass, field

from .actions import (
    Action,
    AddBattery,
    CurtailLoad,
    DispatchBattery,
    SetSwitch,
    action_from_dict,
    action_to_dict,
    apply_action,
    undo_all,
    validate_action,
)
from .caseio import document_from_network, network_from_document, parse_case_json, serialize_case
from .model import Network
from .planner.base import Capabilities, Plan, Planner, PlanRequest
from .powerflow import PowerFlowError, PowerFlowSolution, SolverOptions, solve
from .representation import DEFAULT_HOPS, render
from .violations import AnalysisError, ViolationReport, analyze, compare, is_improvement

RUNNING, RESOLVED, EXHAUSTED, FAILED = "running", "resolved", "exhausted", "failed"
ACCEPTED, ROLLED_BACK, ABORTED, PLANNER_ERROR = "accepted", "rolled_back", "aborted", "planner_error"


@dataclass
class WorkflowOptions:
    t_max: int = 10
    solver: SolverOptions = field(default_factory=SolverOptions)
    token_budget: int = 4000
    hops: int = DEFAULT_HOPS


@dataclass(frozen=True)
class Effectiveness:
    resolved_count: int
    introduced_count: int
    actions_used: int
    tallies: dict[str, int]

    def to_dict(self) -> dict:
        return {"resolved_count": self.resolved_count, "introduced_count": self.introduced_count,
                "actions_used": self.actions_used, "tallies": dict(self.tallies)}


@dataclass
class Attempt:
    iteration: int
    plan: Plan | None
    outcome: str
    before: ViolationReport
    after: ViolationReport | None = None
    note: str = ""
    applied: int = 0
    effectiveness: Effectiveness | None = None

    def to_dict(self) -> dict:
        return {
            "iteration": self.iteration,
            "plan": self.plan.to_dict() if self.plan else None,
            "outcome": self.outcome,
            "before": self.before.to_dict(),
            "after": self.after.to_dict() if self.after is not None else None,
            "note": self.note,
            "applied": self.applied,
            "effectiveness": self.effectiveness.to_dict() if self.effectiveness else None,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Attempt":
        eff = d.get("effectiveness")
        return cls(d["iteration"], Plan.from_dict(d["plan"]) if d["plan"] else None, d["outcome"],
                   ViolationReport.from_dict(d["before"]),
                   ViolationReport.from_dict(d["after"]) if d["after"] else None,
                   d.get("note", ""), d.get("applied", 0), Effectiveness(**eff) if eff else None)


@dataclass
class WorkflowState:
    sandbox: Network
    baseline_snapshot: str
    current_report: ViolationReport
    initial_report: ViolationReport
    iteration: int = 0
    accepted_actions: list[tuple[int, Action]] = field(default_factory=list)
    attempt_log: list[Attempt] = field(default_factory=list)
    knowledge: list[str] = field(default_factory=list)
    status: str = RUNNING
    error: str | None = None


@dataclass
class ResolutionResult:
    status: str
    network: Network
    initial_case: dict
    initial_report: ViolationReport
    final_report: ViolationReport
    accepted_actions: list[tuple[int, Action]]
    iterations: int
    attempts: list[Attempt]
    explanation: str
    wall_time_s: float = 0.0
    error: str | None = None

    @property
    def metrics(self) -> dict:
        return {
            "initial_violations": len(self.initial_report),
            "final_violations": len(self.final_report),
            "resolved_violations": len(self.initial_report.keys - self.final_report.keys),
            "accepted_actions": len(self.accepted_actions),
            "iterations": self.iterations,
        }

    def to_dict(self, include_timing: bool = True) -> dict:
        d = {
            "status": self.status,
            "iterations": self.iterations,
            "accepted_actions": [{"iteration": t, **action_to_dict(a)} for t, a in self.accepted_actions],
            "initial_report": self.initial_report.to_dict(),
            "final_report": self.final_report.to_dict(),
            "metrics": self.metrics,
            "explanation": self.explanation,
            "error": self.error,
            "attempts": [a.to_dict() for a in self.attempts],
            "initial_case": self.initial_case,
            "final_case": document_from_network(self.network).to_json_obj(),
        }
        if include_timing:
            d["wall_time_s"] = self.wall_time_s
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ResolutionResult":
        accepted = []
        for item in d["accepted_actions"]:
            item = dict(item)
            t = item.pop("iteration")
            accepted.append((t, action_from_dict(item)))
        final = network_from_document(parse_case_json(_dumps(d["final_case"])), with_scenario=False)
        return cls(
            status=d["status"], network=final, initial_case=d["initial_case"],
            initial_report=ViolationReport.from_dict(d["initial_report"]),
            final_report=ViolationReport.from_dict(d["final_report"]),
            accepted_actions=accepted, iterations=d["iterations"],
            attempts=[Attempt.from_dict(a) for a in d["attempts"]],
            explanation=d["explanation"], wall_time_s=d.get("wall_time_s", 0.0), error=d.get("error"),
        )

    def initial_network(self) -> Network:
        return network_from_document(parse_case_json(_dumps(self.initial_case)))


def _dumps(obj) -> str:
    return json.dumps(obj)


def snapshot(net: Network) -> str:
    return serialize_case(document_from_network(net))


def restore(text: str) -> Network:
    return network_from_document(parse_case_json(text), with_scenario=False)


def tool_tallies(actions) -> dict[str, int]:
    return dict(sorted(Counter(a.tool for a in actions).items()))


def evaluate_effectiveness(before: ViolationReport, after: ViolationReport, plan: Plan | None,
                           accepted: bool = True) -> Effectiveness:
    """Resolved/introduced counts for one plan; a rejected plan resolves nothing."""
    cmp = compare(before, after)
    actions = plan.actions if plan else ()
    return Effectiveness(len(cmp.resolved) if accepted else 0, len(cmp.introduced),
                         len(actions), tool_tallies(actions))


def describe_action(a: Action) -> str:
    if isinstance(a, SetSwitch):
        return f"{'close' if a.closed else 'open'} switch {a.switch_id}"
    if isinstance(a, CurtailLoad):
        return f"curtail load {a.load_id} to gamma {a.gamma:g}"
    if isinstance(a, AddBattery):
        return f"place battery at bus {a.bus_id} (s_max {a.s_max_mva:g} MVA)"
    if isinstance(a, DispatchBattery):
        return f"dispatch battery {a.battery_id} at p {a.p_mw:g} MW, q {a.q_mvar:g} Mvar"
    return repr(a)


def _solve_report(net: Network, opts: SolverOptions) -> tuple[PowerFlowSolution, ViolationReport] | None:
    try:
        sol = solve(net, opts)
        return sol, analyze(net, sol)
    except (PowerFlowError, AnalysisError):
        return None


def _execute(state: WorkflowState, plan: Plan, opts: WorkflowOptions):
    """Apply a plan action by action, trial-solving after each one.

    Returns (report, applied count, note); report is None when the plan was
    aborted, in which case the sandbox has already been undone.
    """
    stack = []
    report = None
    for i, a in enumerate(plan.actions):
        diag = validate_action(state.sandbox, a)
        if diag is not None:
            undo_all(state.sandbox, stack)
            return None, i, f"action {i} rejected: {diag}"
        stack.insert(0, apply_action(state.sandbox, a))
        trial = _solve_report(state.sandbox, opts.solver)
        if trial is None:
            undo_all(state.sandbox, stack)
            return None, i, f"power flow failed after action {i} ({describe_action(a)})"
        report = trial[1]
        if report.empty:
            return report, i + 1, "all violations cleared"
    if report is None:
        return state.current_report, 0, "empty plan"
    return report, len(plan.actions), ""


def run(net: Network, planner: Planner, opts: WorkflowOptions | None = None) -> ResolutionResult:
    """Resolve violations on a sandbox copy of ``net``; ``net`` is not modified."""
    opts = opts or WorkflowOptions()
    initial_case = document_from_network(net).to_json_obj()
    t0 = time.perf_counter()
    sandbox = net.copy()
    seeded = _solve_report(sandbox, opts.solver)
    if seeded is None:
        empty = ViolationReport()
        state = WorkflowState(sandbox, snapshot(sandbox), empty, empty, status=FAILED,
                              error="PowerFlowError: base case does not solve")
        return _result(state, initial_case, t0)
    sol, report = seeded
    state = WorkflowState(sandbox, snapshot(sandbox), report, report)
    if report.empty:
        state.status = RESOLVED
        return _result(state, initial_case, t0)

    while state.iteration < opts.t_max:
        state.iteration += 1
        t = state.iteration
        before = state.current_report
        ctx = render(state.sandbox, sol, before, opts.token_budget, opts.hops)
        req = PlanRequest(ctx, Capabilities.from_network(state.sandbox), opts.t_max - t + 1,
                          history=tuple(state.knowledge), network=state.sandbox.copy(), report=before)
        try:
            plan = planner.propose(req)
        except Exception as exc:  # any planner failure ends the run
            state.error = f"{type(exc).__name__}: {exc}"
            state.attempt_log.append(Attempt(t, None, PLANNER_ERROR, before, note=state.error))
            state.status = EXHAUSTED if state.accepted_actions else FAILED
            break
        after, applied, note = _execute(state, plan, opts)
        if after is None:
            state.sandbox = restore(state.baseline_snapshot)
            eff = evaluate_effectiveness(before, before, plan, accepted=False)
            state.attempt_log.append(Attempt(t, plan, ABORTED, before, None, note, applied, eff))
            state.knowledge.append(f"iteration {t}: {_plan_text(plan)} aborted ({note})")
            continue
        if is_improvement(before, after):
            state.baseline_snapshot = snapshot(state.sandbox)
            state.accepted_actions += [(t, a) for a in plan.actions[:applied]]
            state.current_report = after
            sol = solve(state.sandbox, opts.solver)
            eff = evaluate_effectiveness(before, after, plan)
            state.attempt_log.append(Attempt(t, plan, ACCEPTED, before, after, note, applied, eff))
            if after.empty:
                state.status = RESOLVED
                break
        else:
            state.sandbox = restore(state.baseline_snapshot)
            eff = evaluate_effectiveness(before, after, plan, accepted=False)
            state.attempt_log.append(Attempt(t, plan, ROLLED_BACK, before, after, note, applied, eff))
            state.knowledge.append(
                f"iteration {t}: {_plan_text(plan)} rolled back "
                f"(violations {len(before)} -> {len(after)}, severity "
                f"{before.total_severity:.4f} -> {after.total_severity:.4f})")
    if state.status == RUNNING:
        state.status = EXHAUSTED
    return _result(state, initial_case, t0)


def _plan_text(plan: Plan) -> str:
    return "; ".join(describe_action(a) for a in plan.actions) or "empty plan"


def _result(state: WorkflowState, initial_case: dict, t0: float) -> ResolutionResult:
    explanation = summarize(state)
    return ResolutionResult(
        status=state.status, network=state.sandbox, initial_case=initial_case,
        initial_report=state.initial_report, final_report=state.current_report,
        accepted_actions=list(state.accepted_actions), iterations=state.iteration,
        attempts=list(state.attempt_log), explanation=explanation,
        wall_time_s=time.perf_counter() - t0, error=state.error,
    )


def summarize(state: WorkflowState) -> str:
    """Deterministic plain-text account of a finished run."""
    init = state.initial_report
    if state.status == RESOLVED and not state.attempt_log:
        return "No action required: the network has no violations.\n"
    lines = [f"Initial state: {len(init)} violation(s)."]
    lines += [f"  - {v.describe()}" for v in init.violations]
    for att in state.attempt_log:
        if att.plan is None:
            lines.append(f"Iteration {att.iteration}: planner failed ({att.note}).")
            continue
        head = (f"Iteration {att.iteration}: {att.plan.planner_id or 'planner'} proposed "
                f"{len(att.plan.actions)} action(s): {_plan_text(att.plan)}.")
        lines.append(head)
        if att.plan.rationale:
            lines.append(f"  Rationale: {att.plan.rationale}")
        if att.outcome == ACCEPTED:
            lines.append(f"  Outcome: accepted; violations {len(att.before)} -> {len(att.after)}.")
        elif att.outcome == ROLLED_BACK:
            lines.append(f"  Outcome: rolled back; violations would have gone "
                         f"{len(att.before)} -> {len(att.after)}.")
        else:
            lines.append(f"  Outcome: aborted; {att.note}.")
    final = state.current_report
    lines.append(f"Final state: {state.status}; {len(final)} violation(s) remain.")
    lines += [f"  - {v.describe()}" for v in final.violations]
    accepted = [a for a in state.attempt_log if a.outcome == ACCEPTED]
    if accepted:
        lines.append("Action justification:")
        for att in accepted:
            cleared = compare(att.before, att.after).resolved
            what = ", ".join(f"{k} {e}" for k, e in cleared) or "reduced severity only"
            for a in att.plan.actions[:att.applied]:
                lines.append(f"  - iteration {att.iteration}, {describe_action(a)}: applied with the "
                             f"resolution of {what}")
    return "\n".join(lines) + "\n"
