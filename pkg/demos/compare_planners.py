"""Small seeded benchmark of the guided planner against the two baselines.

Run: python demos/compare_planners.py [trials] [budget_s]
"""
import sys

from regrasp.harness import emit_report, load_scene, run_benchmark

trials = int(sys.argv[1]) if len(sys.argv) > 1 else 3
budget = float(sys.argv[2]) if len(sys.argv) > 2 else 30.0
scene = load_scene("box")

def show(n, rec):
    status = f"{rec.transitions} transitions" if rec.success else "no solution"
    print(f"trial {n}: {rec.planner:6s} {rec.plan_time_s:6.2f} s  {status}")

records, summary = run_benchmark(scene, ["guided", "pmp", "dbmp"], trials, budget, seed=1, progress=show)
print()
print(emit_report(records, "markdown"))
