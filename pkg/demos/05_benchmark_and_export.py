"""Benchmark a small suite, then turn the successful runs into training data.

Reports leave out wall-clock fields unless asked, so two benchmark runs are
byte-identical. Every exported record replays to its recorded outcome.

Run: python demos/05_benchmark_and_export.py
"""

import json
import tempfile
from pathlib import Path

from grid_agent import HeuristicPlanner
from grid_agent.harness.benchmark import run_benchmark
from grid_agent.harness.export import export_training_data, read_records
from grid_agent.harness.scenarios import preset

suite = [preset(n) for n in ("tie_feeder", "case30_light", "cigre_mv_severe", "ieee69_disconnected")]
report = run_benchmark(suite, HeuristicPlanner, include_timing=True)
print(report.table())

again = run_benchmark(suite, HeuristicPlanner, jobs=4)
print("deterministic:", again.to_json() == run_benchmark(suite, HeuristicPlanner).to_json())

with tempfile.TemporaryDirectory() as tmp:
    runs = [(r.scenario, r.result) for r in report.runs]
    path = Path(tmp) / "train.jsonl"
    summary = export_training_data([r for r in runs if r[1].status == "resolved"], "jsonl", path)
    records = read_records(path)
    print(f"exported {summary.written} records; replay matches:",
          all(rec.replay() == rec.final_fingerprint for rec in records))
    chat = Path(tmp) / "chat.jsonl"
    export_training_data([r for r in runs if r[1].status == "resolved"], "chat_jsonl", chat)
    first = json.loads(chat.read_text().splitlines()[0])
    print("assistant turn:", first["messages"][2]["content"])
