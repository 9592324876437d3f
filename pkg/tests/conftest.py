"""Records every workflow run made anywhere in the suite so monotonic
progress can be checked over all of them at the end of the session."""

import grid_agent.cli
import grid_agent.harness.benchmark
import grid_agent.workflow

from helpers import ACCEPTANCE_LINES, progress_counterexamples

RECORDED_RUNS = []
_original_run = grid_agent.workflow.run


def _recording_run(*args, **kwargs):
    result = _original_run(*args, **kwargs)
    RECORDED_RUNS.append(result)
    return result


for module in (grid_agent.workflow, grid_agent.harness.benchmark, grid_agent.cli):
    module.run = _recording_run


def suite_progress_summary() -> tuple[bool, str]:
    accepted = sum(a.outcome == "accepted" for r in RECORDED_RUNS for a in r.attempts)
    bad = [c for r in RECORDED_RUNS for c in progress_counterexamples(r)]
    return not bad, (f"{len(RECORDED_RUNS)} workflow runs, {accepted} accepted iterations, "
                     f"{len(bad)} counterexamples")


def pytest_sessionfinish(session, exitstatus):
    ok, _ = suite_progress_summary()
    if RECORDED_RUNS and not ok and session.exitstatus == 0:
        session.exitstatus = 1


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_LINES and not RECORDED_RUNS:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
    if RECORDED_RUNS:
        ok, detail = suite_progress_summary()
        terminalreporter.write_line(
            f"criterion 5 (whole suite): {'PASS' if ok else 'FAIL'} - {detail}")
