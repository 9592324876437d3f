"""Two radial feeders and one open tie: the smallest end-to-end resolution.

Feeder A sags below the voltage band at its last two buses. The heuristic
planner tries switching first, finds that closing tie T1 back-feeds the
weak end from feeder B, and the validator accepts the plan.

Run: python demos/02_tie_switch.py
"""

from grid_agent import HeuristicPlanner, analyze, run, solve
from grid_agent.harness.metrics import compute_metrics
from grid_agent.harness.scenarios import tie_feeder

net = tie_feeder()
before = analyze(net, solve(net))
print("before:")
for v in before.violations:
    print("  ", v.describe())

result = run(net, HeuristicPlanner())
print()
print(result.explanation)

m = compute_metrics(result)
print(f"status {result.status}, {m.total_actions} action(s), "
      f"efficiency {m.action_efficiency}, coordination {m.coordination_score}")
print("caller's network untouched:", net.switches["T1"].closed is False)
