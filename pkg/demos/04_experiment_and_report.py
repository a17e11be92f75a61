"""A miniature batch experiment with resumable journaling and reporting.

Run:  python demos/04_experiment_and_report.py [outdir]
"""

import sys
import tempfile
from pathlib import Path

from plateforge.harness import ExperimentPlan, emit_report, run_experiment

out = Path(sys.argv[1]) if len(sys.argv) > 1 else Path(tempfile.mkdtemp())

plan = ExperimentPlan(
    plates=8,
    n_values=(1, 5, 10),
    master_seed=2024,
    profile="desk",
    out_dir=str(out / "experiment"),
)

# Stop after a handful of cells to show resumption, then finish the rest;
# the journal makes the second call pick up exactly where the first ended.
partial = run_experiment(plan, stop_after_cells=5)
print(f"interrupted run: {len(partial.rows)} cells journaled, complete={partial.complete}")

summary = run_experiment(plan)
print(f"resumed run:     {len(summary.rows)} cells, complete={summary.complete}")

print("\nASR and runtime by candidate count:")
for n, stats in summary.per_n().items():
    print(f"  n={n:2d}: ASR={stats['asr']:.2f}  mean={stats['mean_seconds']:.2f}s "
          f"median={stats['median_seconds']:.2f}s")
peak = summary.peak_rss_bytes
print(f"\npeak RSS: {peak / 1e6:.0f} MB" if peak else "\npeak RSS: unknown")
print(f"total oracle queries: {summary.total_queries}")

paths = emit_report(summary, out / "report")
print(f"\nreport: {paths['csv']}\n        {paths['svg']}")
