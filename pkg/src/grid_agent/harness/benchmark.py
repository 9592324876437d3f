"""Run scenario suites and aggregate their metrics."""

from __future__ import annotations

import json
import statistics
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

from ..planner.base import Planner
from ..workflow import ResolutionResult, WorkflowOptions, run
from .metrics import compute_metrics
from .scenarios import Scenario

PlannerFactory = Callable[[], Planner]


@dataclass
class BenchmarkRun:
    scenario: str
    repetition: int
    result: ResolutionResult
    row: dict


@dataclass
class BenchmarkReport:
    rows: list[dict]
    aggregate: dict
    planner: str
    include_timing: bool = False
    runs: list[BenchmarkRun] = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {"planner": self.planner, "aggregate": self.aggregate, "runs": self.rows}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    def table(self) -> str:
        cols = ["scenario", "rep", "status", "viol", "left", "iter", "acts", "eff", "coord"]
        if self.include_timing:
            cols.append("time_s")
        body = []
        for r in self.rows:
            cells = [r["scenario"], str(r["repetition"]), r["status"], str(r["initial_violations"]),
                     str(r["final_violations"]), str(r["iterations"]), str(r["total_actions"]),
                     _fmt(r["action_efficiency"]), _fmt(r["coordination_score"])]
            if self.include_timing:
                cells.append(_fmt(r["runtime_seconds"], 3))
            body.append(cells)
        widths = [max(len(c), *(len(row[i]) for row in body)) for i, c in enumerate(cols)]
        line = lambda cells: "  ".join(c.ljust(w) for c, w in zip(cells, widths)).rstrip()
        out = [line(cols), line(["-" * w for w in widths])] + [line(r) for r in body]
        a = self.aggregate
        out.append("")
        out.append(f"runs {a['runs']}  success rate {a['success_rate'] * 100:.1f}%  "
                   f"mean iterations {_fmt(a['mean_iterations'])}  mean actions {_fmt(a['mean_actions'])}  "
                   f"mean efficiency {_fmt(a['mean_efficiency'])}"
                   + (f"  mean runtime {_fmt(a['mean_runtime_s'], 3)} s" if self.include_timing else ""))
        return "\n".join(out) + "\n"


def _fmt(x, digits: int = 2) -> str:
    return "-" if x is None else f"{x:.{digits}f}"


def _mean(xs):
    xs = [x for x in xs if x is not None]
    return statistics.fmean(xs) if xs else None


def aggregate(rows: list[dict], include_timing: bool = False) -> dict:
    n = len(rows)
    agg = {
        "runs": n,
        "successes": sum(r["success"] for r in rows),
        "success_rate": (sum(r["success"] for r in rows) / n) if n else 0.0,
        "mean_iterations": _mean([r["iterations"] for r in rows]),
        "mean_actions": _mean([r["total_actions"] for r in rows]),
        "mean_efficiency": _mean([r["action_efficiency"] for r in rows]),
        "failures": [{"scenario": r["scenario"], "repetition": r["repetition"], "status": r["status"],
                      "error": r["error"]} for r in rows if not r["success"]],
    }
    if include_timing:
        agg["mean_runtime_s"] = _mean([r["runtime_seconds"] for r in rows])
    return agg


def _one(scenario: Scenario, rep: int, make_planner: PlannerFactory, opts: WorkflowOptions,
         include_timing: bool) -> BenchmarkRun:
    net = scenario.build()
    result = run(net, make_planner(), opts)
    m = compute_metrics(result)
    row = {
        "scenario": scenario.name,
        "repetition": rep,
        "status": result.status,
        "initial_violations": len(result.initial_report),
        "final_violations": len(result.final_report),
        "error": result.error,
        "final_fingerprint": result.final_report.fingerprint,
        **m.to_dict(include_timing),
    }
    return BenchmarkRun(scenario.name, rep, result, row)


def run_benchmark(suite: list[Scenario], make_planner: PlannerFactory, repetitions: int = 1,
                  opts: WorkflowOptions | None = None, jobs: int = 1, include_timing: bool = False,
                  planner_name: str = "") -> BenchmarkReport:
    """Run every scenario ``repetitions`` times; failures are recorded as rows.

    Wall-clock fields are left out unless ``include_timing`` is set, so two
    runs with a deterministic planner give byte-identical reports.
    """
    opts = opts or WorkflowOptions()
    tasks = [(sc, rep) for sc in suite for rep in range(repetitions)]
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            runs = list(pool.map(lambda t: _one(t[0], t[1], make_planner, opts, include_timing), tasks))
    else:
        runs = [_one(sc, rep, make_planner, opts, include_timing) for sc, rep in tasks]
    rows = [r.row for r in runs]
    name = planner_name or getattr(make_planner(), "planner_id", "")
    return BenchmarkReport(rows, aggregate(rows, include_timing), name, include_timing, runs)
