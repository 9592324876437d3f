"""Command-line interface: ``grid-agent <subcommand>``.

Exit codes: 0 success or resolved, 2 exhausted or unresolved, 3 input
error, 4 model transport error.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .caseio import CaseError, load_case, network_from_document
from .harness.benchmark import run_benchmark
from .harness.export import FORMATS, WriteError, export_training_data
from .harness.scenarios import (
    CRAFTED, PRESETS, Scenario, ScenarioTarget, TargetUnreachable, base_network, generate_scenario,
    load_suite, preset,
)
from .model import Network
from .planner import HeuristicPlanner, LlmClientConfig, LlmPlanner, TransportError
from .powerflow import PowerFlowError, SolverOptions, solve
from .representation import render
from .violations import KINDS, AnalysisError, analyze
from .workflow import RESOLVED, ResolutionResult, WorkflowOptions, run

EXIT_OK = 0
EXIT_UNRESOLVED = 2
EXIT_INPUT = 3
EXIT_TRANSPORT = 4


class InputError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors, not the unresolved status argparse uses."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def load_network(ref: str) -> Network:
    """A built-in or crafted name, a preset scenario name, a ``.m`` file, a
    JSON case, or a scenario JSON (an object with ``base`` and
    ``perturbations``)."""
    if ref in CRAFTED:
        return base_network(ref)
    if ref in PRESETS:
        return preset(ref).build()
    path = Path(ref)
    if path.suffix == ".json" and path.exists():
        obj = json.loads(path.read_text(encoding="utf-8"))
        if isinstance(obj, dict) and "base" in obj and "perturbations" in obj:
            return Scenario.from_dict(obj).build()
    return network_from_document(load_case(ref))


def _write(text: str, out: str | None) -> None:
    if out:
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


def _dumps(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _planner_factory(args):
    if args.planner == "heuristic":
        return HeuristicPlanner
    cfg = LlmClientConfig.from_env(endpoint=args.endpoint, model=args.model, timeout_s=args.timeout,
                                   max_retries=args.max_retries, thinking_budget=args.thinking_budget)
    if not cfg.endpoint:
        raise InputError("the llm planner needs --endpoint or $GRID_AGENT_LLM_ENDPOINT")
    return lambda: LlmPlanner(cfg)


def _workflow_options(args) -> WorkflowOptions:
    if args.t_max < 1 or args.budget < 1:
        raise InputError("--t-max and --budget must be positive")
    return WorkflowOptions(t_max=args.t_max, token_budget=args.budget)


def cmd_solve(args) -> int:
    net = load_network(args.case)
    sol = solve(net, SolverOptions(tolerance_pu=args.tolerance, max_iterations=args.max_iter))
    _write(_dumps(sol.to_dict()), args.output)
    return EXIT_OK


def cmd_analyze(args) -> int:
    net = load_network(args.case)
    report = analyze(net, solve(net))
    _write(_dumps(report.to_dict()), args.output)
    return EXIT_OK


def cmd_resolve(args) -> int:
    net = load_network(args.case)
    opts = _workflow_options(args)
    planner = _planner_factory(args)()
    if args.dump_context:
        sol = solve(net, opts.solver)
        ctx = render(net, sol, analyze(net, sol), opts.token_budget, opts.hops)
        Path(args.dump_context).write_text(ctx.text, encoding="utf-8")
    result = run(net, planner, opts)
    _write(_dumps(result.to_dict(include_timing=args.timing)), args.output)
    print(result.explanation, end="", file=sys.stderr if not args.output else sys.stdout)
    if result.error and result.error.startswith(TransportError.__name__):
        return EXIT_TRANSPORT
    return EXIT_OK if result.status == RESOLVED else EXIT_UNRESOLVED


def cmd_gen_scenario(args) -> int:
    kinds = args.kinds or []
    bad = set(kinds) - set(KINDS)
    if bad:
        raise InputError(f"unknown violation kinds {sorted(bad)}")
    if kinds == ["disconnected"]:
        # a pure disconnection target counts isolated buses
        target = ScenarioTarget(args.target_count, {"disconnected": args.target_count})
    else:
        target = ScenarioTarget.of(args.target_count, kinds)
    base = base_network(args.case)
    sc = generate_scenario(base, target, seed=args.seed, name=args.name, base_name=args.case)
    _write(_dumps(sc.to_dict()), args.output)
    return EXIT_OK


def cmd_benchmark(args) -> int:
    suite = load_suite(Path(args.suite).read_text(encoding="utf-8"))
    if args.jobs < 1 or args.repetitions < 1:
        raise InputError("--jobs and --repetitions must be positive")
    report = run_benchmark(suite, _planner_factory(args), args.repetitions, _workflow_options(args),
                           jobs=args.jobs, include_timing=args.timing, planner_name=args.planner)
    _write(report.to_json(), args.output)
    sys.stderr.write(report.table())
    if args.save_runs:
        out = Path(args.save_runs)
        out.mkdir(parents=True, exist_ok=True)
        for r in report.runs:
            doc = {"scenario": r.scenario, "repetition": r.repetition,
                   "result": r.result.to_dict(include_timing=args.timing)}
            (out / f"{r.scenario}-{r.repetition}.json").write_text(_dumps(doc), encoding="utf-8")
    return EXIT_OK


def read_runs(directory: str) -> list[tuple[str, ResolutionResult]]:
    """Runs saved by ``benchmark --save-runs`` or ``resolve -o``, in file-name order."""
    runs = []
    for path in sorted(Path(directory).glob("*.json")):
        obj = json.loads(path.read_text(encoding="utf-8"))
        if "result" in obj:
            runs.append((obj.get("scenario", path.stem), ResolutionResult.from_dict(obj["result"])))
        else:
            runs.append((path.stem, ResolutionResult.from_dict(obj)))
    return runs


def cmd_export(args) -> int:
    if not Path(args.runs).is_dir():
        raise InputError(f"{args.runs} is not a directory")
    summary = export_training_data(read_runs(args.runs), args.format, args.output)
    print(f"wrote {summary.written} record(s), skipped {summary.skipped}", file=sys.stderr)
    return EXIT_OK


def _add_workflow_flags(p) -> None:
    p.add_argument("--planner", choices=("heuristic", "llm"), default="heuristic")
    p.add_argument("--t-max", type=int, default=10, help="maximum workflow iterations")
    p.add_argument("--budget", type=int, default=4000, help="context token budget")
    p.add_argument("--timing", action="store_true", help="include wall-clock fields in the JSON")
    llm = p.add_argument_group("llm planner")
    llm.add_argument("--endpoint", help="chat-completions URL (default $GRID_AGENT_LLM_ENDPOINT)")
    llm.add_argument("--model", help="model name (default $GRID_AGENT_LLM_MODEL)")
    llm.add_argument("--timeout", type=float, help="request timeout in seconds")
    llm.add_argument("--max-retries", type=int, help="transport retries per request")
    llm.add_argument("--thinking-budget", type=int, help="reasoning token budget")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="grid-agent", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("solve", help="run AC power flow and print the solution")
    p.add_argument("case")
    p.add_argument("--tolerance", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=50)
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("analyze", help="print the violation report")
    p.add_argument("case")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("resolve", help="run the remediation workflow")
    p.add_argument("case")
    _add_workflow_flags(p)
    p.add_argument("--dump-context", metavar="FILE", help="write the first rendered context here")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_resolve)

    p = sub.add_parser("gen-scenario", help="search for perturbations producing violations")
    p.add_argument("case")
    p.add_argument("--target-count", type=int, required=True)
    p.add_argument("--kinds", nargs="*", metavar="KIND", help=f"any of {', '.join(KINDS)}")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--name")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_gen_scenario)

    p = sub.add_parser("benchmark", help="run a scenario suite")
    p.add_argument("--suite", required=True)
    _add_workflow_flags(p)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--repetitions", type=int, default=1)
    p.add_argument("--save-runs", metavar="DIR", help="also save every run for export-data")
    p.add_argument("-o", "--output")
    p.set_defaults(func=cmd_benchmark)

    p = sub.add_parser("export-data", help="export successful runs as training data")
    p.add_argument("--runs", required=True, metavar="DIR")
    p.add_argument("--format", choices=FORMATS, default="jsonl")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_export)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except TargetUnreachable as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNRESOLVED
    except (PowerFlowError, AnalysisError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_UNRESOLVED
    except TransportError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_TRANSPORT
    except (InputError, CaseError, KeyError, ValueError, WriteError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
