"""The chat-model planner without a model: a scripted transport stands in.

The first reply is prose, so parsing fails and the planner sends exactly one
repair prompt carrying the parse error. The second reply is valid tool-call
JSON. Point --endpoint at a real chat-completions server (see the README) to
use a live model instead.

Run: python demos/04_llm_planner_offline.py
"""

import json

from grid_agent import LlmClientConfig, LlmPlanner, run
from grid_agent.harness.scenarios import tie_feeder

REPLIES = [
    "The weak end of feeder A should be back-fed through the tie.",
    json.dumps({"actions": [{"tool": "update_switch_status",
                             "args": {"switch_id": "T1", "closed": True}}],
                "rationale": "Close T1 so buses 3 and 4 are supplied from feeder B."}),
]
sent = []


def scripted_transport(body, cfg):
    sent.append(body)
    return REPLIES[len(sent) - 1]


cfg = LlmClientConfig(endpoint="offline", model="scripted-model")
result = run(tie_feeder(), LlmPlanner(cfg, scripted_transport))

system = sent[0]["messages"][0]["content"]
sections = ("## Role", "## State context", "## Action space", "## Priority policy", "## Output format")
print("prompt sections at offsets:", {h[3:]: system.index(h) for h in sections})
print("repair prompt:", sent[1]["messages"][-1]["content"])
print()
print(result.explanation)
